//! Bibliography ingestion, DOI deduplication and full-text attachment.

mod bibtex;
mod query;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};

pub use bibtex::{parse_bibliography, BibIssue, Bibliography, IssueKind};
pub use query::{build_search_queries, KeywordProvenance, KeywordSet, DEFAULT_GROUP_SIZE, DEFAULT_MAX_CONNECTORS};

/// Environment variable handed through to the fetch hook.
pub const FETCH_API_KEY_ENV: &str = "ELSEVIER_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    /// Normalized DOI: lowercased, resolver/scheme prefix removed.
    pub doi: String,
    pub title: String,
    pub year: Option<i32>,
    pub venue: String,
    pub raw_entry: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextSource {
    LocalFile,
    ExternalFetch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub citation: CitationRecord,
    pub full_text: String,
    pub text_source: TextSource,
    pub word_count: usize,
}

impl PublicationRecord {
    pub fn new(citation: CitationRecord, full_text: String, text_source: TextSource) -> Self {
        let word_count = full_text.split_whitespace().count();
        Self {
            citation,
            full_text,
            text_source,
            word_count,
        }
    }

    pub fn doi(&self) -> &str {
        &self.citation.doi
    }
}

const DOI_PREFIXES: [&str; 5] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
];

pub fn normalize_doi(raw: &str) -> String {
    let mut doi = raw.trim().to_lowercase();
    loop {
        let before = doi.len();
        for prefix in DOI_PREFIXES {
            if let Some(rest) = doi.strip_prefix(prefix) {
                doi = rest.trim_start().to_string();
            }
        }
        if doi.len() == before {
            break;
        }
    }
    doi.trim().to_string()
}

/// File name under which the full text of `doi` is expected.
pub fn text_file_name(doi: &str) -> String {
    format!("{}.txt", doi.replace('/', "_"))
}

/// Keep the first record seen for every DOI, preserving input order.
pub fn dedupe_by_doi(records: Vec<CitationRecord>) -> Vec<CitationRecord> {
    let mut seen = HashSet::new();
    records.into_iter().filter(|r| seen.insert(r.doi.clone())).collect()
}

/// External command that materializes `<dir>/<doi>.txt` for a DOI.
///
/// The command is invoked as `program [args..] <doi> <output-path>`; the
/// API key variable is forwarded when set.
#[derive(Debug, Clone)]
pub struct FetchHook {
    pub program: String,
    pub args: Vec<String>,
}

impl FetchHook {
    pub fn fetch(&self, doi: &str, output: &Path) -> Result<()> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).arg(doi).arg(output);
        if let Ok(key) = std::env::var(FETCH_API_KEY_ENV) {
            cmd.env(FETCH_API_KEY_ENV, key);
        }
        let status = cmd
            .status()
            .map_err(|e| Error::io(format!("running fetch hook `{}`", self.program), e))?;
        if !status.success() {
            return Err(Error::InvalidInput(format!(
                "fetch hook exited with {status} for {doi}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCitation {
    pub doi: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub records: Vec<PublicationRecord>,
    pub skipped: Vec<SkippedCitation>,
    pub bibliography_issues: Vec<BibIssue>,
    /// Citations parsed before DOI deduplication.
    pub citations_indexed: usize,
}

/// Bibliography files in `dir`, sorted by name.
pub fn bibliography_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("bib")))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every `*.bib` in `dir`, dedupe by DOI and attach `<doi>.txt` texts.
pub fn load_corpus(dir: &Path, hook: Option<&FetchHook>) -> Result<CorpusLoad> {
    let files = bibliography_files(dir)?;
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no .bib file found in {}", dir.display())));
    }
    let mut load = CorpusLoad::default();
    let mut citations = Vec::new();
    for file in &files {
        let text = fs::read_to_string(file).map_err(|e| Error::io(format!("reading {}", file.display()), e))?;
        let bib = parse_bibliography(&text);
        citations.extend(bib.records);
        load.bibliography_issues.extend(bib.issues);
    }
    load.citations_indexed = citations.len();

    for citation in dedupe_by_doi(citations) {
        let path = dir.join(text_file_name(&citation.doi));
        let mut source = TextSource::LocalFile;
        if !path.exists() {
            if let Some(hook) = hook {
                match hook.fetch(&citation.doi, &path) {
                    Ok(()) => source = TextSource::ExternalFetch,
                    Err(e) => warn!(doi = %citation.doi, error = %e, "fetch hook failed"),
                }
            }
        }
        if !path.exists() {
            load.skipped.push(SkippedCitation {
                doi: citation.doi,
                reason: "no full-text file".into(),
            });
            continue;
        }
        let text = match fs::read(&path) {
            Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
            Err(e) => {
                load.skipped.push(SkippedCitation {
                    doi: citation.doi,
                    reason: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        if text.trim().is_empty() {
            warn!(doi = %citation.doi, "empty full text, excluded");
            load.skipped.push(SkippedCitation {
                doi: citation.doi,
                reason: "empty full text".into(),
            });
            continue;
        }
        load.records.push(PublicationRecord::new(citation, text, source));
    }
    Ok(load)
}
