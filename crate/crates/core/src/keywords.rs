//! Keyword harvesting: per-abstract extraction, one consolidation call, and
//! a human-curated final list.

use std::path::Path;

use rayon::prelude::*;
use tracing::warn;

use crate::corpus::{KeywordProvenance, KeywordSet};
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, ModelEndpoint, Stage};
use crate::prompts::{bindings, PromptRegistry, TemplateId};

pub const KEYWORD_MARKER: &str = "Deep learning related words:";

pub const EXTRACTION_QUERY: &str =
    "your task is to extract the deep learning related keywords from the provided context for the literature survey";

pub const CONSOLIDATION_QUERY: &str =
    "your task is to consolidate the provided list of keywords for the literature survey: \
remove redundant variants and any term that is not related to deep learning, and keep the remaining keywords";

const CURATED: &str = include_str!("../data/curated_keywords.txt");

/// Items after the last marker, up to the end of that line. `None` when the
/// marker is absent.
pub fn parse_keyword_response(text: &str) -> Option<Vec<String>> {
    let at = text.rfind(KEYWORD_MARKER)?;
    let rest = &text[at + KEYWORD_MARKER.len()..];
    let line = rest.lines().next().unwrap_or("");
    Some(
        line.split(',')
            .map(|s| s.trim().trim_end_matches('.').trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect(),
    )
}

fn keyword_call(
    query: &str,
    context: &str,
    doc_id: &str,
    endpoint: &ModelEndpoint,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<Vec<String>> {
    let prompt = prompts.render(
        TemplateId::KeywordExtraction,
        &bindings(&[("query", query), ("context", context)]),
    )?;
    let req = ChatRequest::new(endpoint, prompt, doc_id, Stage::Keywords);
    let resp = gateway.complete(endpoint, &req)?;
    match parse_keyword_response(&resp.text) {
        Some(words) => Ok(words),
        None => {
            warn!(doc = doc_id, endpoint = %endpoint.name, "keyword marker absent in response");
            Ok(Vec::new())
        }
    }
}

/// Keywords one endpoint finds in one abstract.
pub fn extract_keywords(
    abstract_text: &str,
    endpoint: &ModelEndpoint,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<Vec<String>> {
    if abstract_text.trim().is_empty() {
        return Err(Error::InvalidInput("empty abstract".into()));
    }
    keyword_call(EXTRACTION_QUERY, abstract_text, "abstract", endpoint, prompts, gateway)
}

/// Run extraction over many abstracts, concatenating results in input order.
pub fn extract_all(
    abstracts: &[String],
    endpoint: &ModelEndpoint,
    prompts: &PromptRegistry,
    gateway: &Gateway,
    parallelism: usize,
) -> Result<Vec<String>> {
    let pool = crate::extraction::thread_pool(parallelism)?;
    let lists = pool.install(|| {
        abstracts
            .par_iter()
            .map(|a| extract_keywords(a, endpoint, prompts, gateway))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(lists.into_iter().flatten().collect())
}

/// A single call over the whole raw list; exact duplicates in the reply are
/// dropped afterwards, keeping first occurrences.
pub fn consolidate_keywords(
    raw: &[String],
    endpoint: &ModelEndpoint,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<Vec<String>> {
    if raw.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    let words = keyword_call(
        CONSOLIDATION_QUERY,
        &raw.join(", "),
        "keywords",
        endpoint,
        prompts,
        gateway,
    )?;
    Ok(dedupe_exact(words))
}

fn dedupe_exact(words: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    words.into_iter().filter(|w| seen.insert(w.clone())).collect()
}

/// One keyword per line; blank lines skipped, duplicates dropped with a warning.
pub fn parse_curated(text: &str) -> Result<KeywordSet> {
    let lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let (set, dropped) = KeywordSet::new(lines, KeywordProvenance::HumanCurated);
    for d in &dropped {
        warn!(keyword = %d, "duplicate curated keyword dropped");
    }
    if set.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    Ok(set)
}

pub fn load_curated(path: &Path) -> Result<KeywordSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_curated(&text)
}

/// The 25 keywords bundled with the tool.
pub fn builtin_curated() -> KeywordSet {
    parse_curated(CURATED).expect("bundled keyword list is valid")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CurationDiff {
    pub removed: Vec<String>,
    pub added: Vec<String>,
}

/// What the curator removed from, or added to, the consolidated list.
pub fn curation_diff(consolidated: &[String], curated: &KeywordSet) -> CurationDiff {
    let cons: std::collections::HashSet<String> = consolidated.iter().map(|k| k.to_lowercase()).collect();
    CurationDiff {
        removed: consolidated.iter().filter(|k| !curated.contains(k)).cloned().collect(),
        added: curated
            .keywords()
            .iter()
            .filter(|k| !cons.contains(&k.to_lowercase()))
            .cloned()
            .collect(),
    }
}

pub fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_list(path: &Path, words: &[String]) -> Result<()> {
    let mut body = words.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    crate::store::write_atomic(path, body.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_marker_line() {
        assert_eq!(
            parse_keyword_response("Deep learning related words: CNN, transfer learning"),
            Some(vec!["cnn".to_string(), "transfer learning".to_string()])
        );
        assert_eq!(parse_keyword_response("nothing to see"), None);
        assert_eq!(
            parse_keyword_response("Answer:::\nDeep learning related words: LSTM\nAnswer:::"),
            Some(vec!["lstm".to_string()])
        );
    }

    #[test]
    fn parsing_is_idempotent() {
        let once = parse_keyword_response("Deep learning related words:  Deep Learning , RNN.").unwrap();
        let again = parse_keyword_response(&format!("{KEYWORD_MARKER} {}", once.join(", "))).unwrap();
        assert_eq!(once, again);
    }

    #[test]
    fn curated_list() {
        let set = builtin_curated();
        assert_eq!(set.len(), 25);
        assert!(set.contains("convolutional neural network"));
        assert_eq!(set.provenance(), KeywordProvenance::HumanCurated);
        let s = parse_curated("a\n\nb\nA\n").unwrap();
        assert_eq!(s.keywords(), ["a", "b"]);
        assert!(matches!(parse_curated("\n \n"), Err(Error::EmptyKeywords)));
    }

    #[test]
    fn diff_reports_removals() {
        let cur = parse_curated("cnn\nlstm\n").unwrap();
        let d = curation_diff(&["cnn".into(), "gpu".into()], &cur);
        assert_eq!(d.removed, ["gpu"]);
        assert_eq!(d.added, ["lstm"]);
    }
}
