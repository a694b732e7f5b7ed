mod support;

use methodscan::config::Config;
use methodscan::corpus::parse_bibliography;

#[test]
fn generated_fixtures_are_current() {
    let mut stale = Vec::new();
    for (rel, bytes) in support::generated_fixtures() {
        if let Err(e) = support::check_file(&support::fixtures().join(&rel), &bytes) {
            stale.push(e);
        }
    }
    assert!(
        stale.is_empty(),
        "run with REGENERATE_FIXTURES=1:\n{}",
        stale.join("\n")
    );
}

#[test]
fn bibliography_shape() {
    let files = support::bibliography_files();
    assert_eq!(files.len(), support::BIB_FILES);
    let mut total = 0;
    let mut dois = std::collections::HashSet::new();
    for (_, text) in &files {
        let parsed = parse_bibliography(text);
        assert!(parsed.issues.is_empty(), "{:?}", parsed.issues);
        total += parsed.records.len();
        for r in parsed.records {
            dois.insert(r.doi);
        }
    }
    assert_eq!(total, support::BIB_ENTRIES);
    assert_eq!(dois.len(), support::BIB_UNIQUE);
}

#[test]
fn generated_configs_parse() {
    for rel in ["mini/config.toml", "published/config.toml", "keywords/config.toml"] {
        Config::load(&support::fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
    }
}
