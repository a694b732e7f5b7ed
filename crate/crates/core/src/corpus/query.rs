use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search platforms capped queries at this many boolean connectors.
pub const DEFAULT_MAX_CONNECTORS: usize = 8;
/// Five keywords per query, i.e. five query sets for 25 keywords.
pub const DEFAULT_GROUP_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordProvenance {
    LlmExtracted,
    LlmConsolidated,
    HumanCurated,
}

/// Ordered, case-insensitively unique, lowercase keywords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordSet {
    keywords: Vec<String>,
    provenance: KeywordProvenance,
}

impl KeywordSet {
    /// Normalizes each keyword (trim + lowercase) and drops blanks and
    /// repeats. Returns the set and the keywords that were dropped as
    /// duplicates.
    pub fn new<I, S>(keywords: I, provenance: KeywordProvenance) -> (Self, Vec<String>)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for k in keywords {
            let k = k.as_ref().trim().to_lowercase();
            if k.is_empty() {
                continue;
            }
            if seen.insert(k.clone()) {
                kept.push(k);
            } else {
                dropped.push(k);
            }
        }
        (
            Self {
                keywords: kept,
                provenance,
            },
            dropped,
        )
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn provenance(&self) -> KeywordProvenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn contains(&self, keyword: &str) -> bool {
        let k = keyword.trim().to_lowercase();
        self.keywords.contains(&k)
    }
}

/// Split keywords in order into groups of at most `group_size` and join
/// each group's quoted keywords with ` OR `.
pub fn build_search_queries(keywords: &KeywordSet, max_connectors: usize, group_size: usize) -> Result<Vec<String>> {
    if keywords.is_empty() {
        return Err(Error::EmptyKeywords);
    }
    if group_size == 0 || group_size > max_connectors + 1 {
        return Err(Error::InvalidInput(format!(
            "group size {group_size} must be in 1..={}",
            max_connectors + 1
        )));
    }
    Ok(keywords
        .keywords()
        .chunks(group_size)
        .map(|group| {
            group
                .iter()
                .map(|k| format!("\"{k}\""))
                .collect::<Vec<_>>()
                .join(" OR ")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(n: usize) -> KeywordSet {
        KeywordSet::new((0..n).map(|i| format!("kw{i}")), KeywordProvenance::HumanCurated).0
    }

    fn connectors(q: &str) -> usize {
        q.matches(" OR ").count()
    }

    // Independent partitioner: walks the list and cuts whenever a group fills.
    fn brute_partition(n: usize, group: usize) -> Vec<usize> {
        let mut sizes = vec![];
        let mut current = 0;
        for _ in 0..n {
            if current == group {
                sizes.push(current);
                current = 0;
            }
            current += 1;
        }
        if current > 0 {
            sizes.push(current);
        }
        sizes
    }

    #[test]
    fn twenty_five_keywords_in_five_queries() {
        let q = build_search_queries(&set(25), 8, 5).unwrap();
        assert_eq!(q.len(), 5);
        assert!(q.iter().all(|q| connectors(q) == 4));
        assert_eq!(q[0], "\"kw0\" OR \"kw1\" OR \"kw2\" OR \"kw3\" OR \"kw4\"");
    }

    #[test]
    fn single_keyword() {
        let q = build_search_queries(&set(1), 8, 5).unwrap();
        assert_eq!(q, vec!["\"kw0\"".to_string()]);
    }

    #[test]
    fn ten_keywords_group_nine() {
        let q = build_search_queries(&set(10), 8, 9).unwrap();
        let sizes: Vec<usize> = q.iter().map(|q| connectors(q) + 1).collect();
        assert_eq!(sizes, brute_partition(10, 9));
        assert_eq!(sizes, vec![9, 1]);
        assert!(q.iter().all(|q| connectors(q) <= 8));
    }

    #[test]
    fn errors() {
        let empty = KeywordSet::new(Vec::<String>::new(), KeywordProvenance::HumanCurated).0;
        assert!(matches!(build_search_queries(&empty, 8, 5), Err(Error::EmptyKeywords)));
        assert!(build_search_queries(&set(3), 8, 10).is_err());
        assert!(build_search_queries(&set(3), 8, 0).is_err());
    }

    #[test]
    fn keyword_set_normalizes() {
        let (s, dropped) = KeywordSet::new(
            ["  CNN ", "cnn", "", "Transfer Learning"],
            KeywordProvenance::LlmExtracted,
        );
        assert_eq!(s.keywords(), &["cnn".to_string(), "transfer learning".to_string()]);
        assert_eq!(dropped, vec!["cnn".to_string()]);
    }
}
