//! Prompt templates with `{name}` placeholders.
//!
//! The keyword-extraction and categorical-conversion bodies are kept
//! byte-for-byte in `prompts/*.txt` and compiled in; a directory of
//! same-named files can override them at run time.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    KeywordExtraction,
    CqAnswering,
    CategoricalConversion,
    DlFilter,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::KeywordExtraction,
        TemplateId::CqAnswering,
        TemplateId::CategoricalConversion,
        TemplateId::DlFilter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::KeywordExtraction => "keyword-extraction",
            TemplateId::CqAnswering => "cq-answering",
            TemplateId::CategoricalConversion => "categorical-conversion",
            TemplateId::DlFilter => "dl-filter",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::KeywordExtraction => include_str!("../prompts/keyword-extraction.txt"),
            TemplateId::CqAnswering => include_str!("../prompts/cq-answering.txt"),
            TemplateId::CategoricalConversion => include_str!("../prompts/categorical-conversion.txt"),
            TemplateId::DlFilter => include_str!("../prompts/dl-filter.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    body: String,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Self {
        let body = body.into();
        let pieces = split_placeholders(&body);
        Self { id, body, pieces }
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for p in &self.pieces {
            if let Piece::Placeholder(n) = p {
                if !names.contains(&n.as_str()) {
                    names.push(n);
                }
            }
        }
        names
    }

    /// Substitute every placeholder. Bound values are inserted literally and
    /// never re-expanded; unused bindings are ignored.
    pub fn render<K, V>(&self, bindings: &HashMap<K, V>) -> Result<String>
    where
        K: std::borrow::Borrow<str> + std::hash::Hash + Eq,
        V: AsRef<str>,
    {
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Placeholder(name) => {
                    let value = bindings
                        .get(name.as_str())
                        .ok_or_else(|| Error::MissingBinding(name.clone()))?;
                    out.push_str(value.as_ref());
                }
            }
        }
        Ok(out)
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn split_placeholders(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_ident(&after[..close]) => {
                literal.push_str(&rest[..open]);
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Placeholder(after[..close].to_string()));
                rest = &after[close + 1..];
            }
            _ => {
                literal.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }
    pieces
}

#[derive(Debug, Clone)]
pub struct PromptRegistry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate::new(id, id.builtin())))
            .collect();
        Self { templates }
    }

    /// Built-in templates, replaced by any `<id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut reg = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.exists() {
                let body =
                    std::fs::read_to_string(&path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
                reg.templates.insert(id, PromptTemplate::new(id, body));
            }
        }
        Ok(reg)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render<K, V>(&self, id: TemplateId, bindings: &HashMap<K, V>) -> Result<String>
    where
        K: std::borrow::Borrow<str> + std::hash::Hash + Eq,
        V: AsRef<str>,
    {
        self.get(id).render(bindings)
    }
}

/// Build a binding map from `(name, value)` pairs.
pub fn bindings<'a>(pairs: &[(&'a str, &'a str)]) -> HashMap<&'a str, &'a str> {
    pairs.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_placeholders() {
        let reg = PromptRegistry::builtin();
        assert_eq!(
            reg.get(TemplateId::KeywordExtraction).placeholders(),
            vec!["query", "context"]
        );
        assert_eq!(
            reg.get(TemplateId::CqAnswering).placeholders(),
            vec!["query", "context"]
        );
        assert_eq!(reg.get(TemplateId::DlFilter).placeholders(), vec!["query", "context"]);
        assert_eq!(
            reg.get(TemplateId::CategoricalConversion).placeholders(),
            vec!["Question", "Answer"]
        );
    }

    #[test]
    fn categorical_prompt_closes_with_answer_format() {
        let out = PromptRegistry::builtin()
            .render(
                TemplateId::CategoricalConversion,
                &bindings(&[("Question", "Q?"), ("Answer", "A.")]),
            )
            .unwrap();
        assert!(out.ends_with("Response: (Yes or No)\n\nAnswer:::"), "{out}");
        assert!(out.contains("Question: Q?\n\nAnswer: A."));
    }

    #[test]
    fn missing_binding_names_placeholder() {
        let reg = PromptRegistry::builtin();
        let err = reg
            .render(TemplateId::KeywordExtraction, &bindings(&[("query", "q")]))
            .unwrap_err();
        assert!(matches!(err, Error::MissingBinding(ref n) if n == "context"), "{err}");
    }

    #[test]
    fn bound_values_are_not_re_expanded() {
        let t = PromptTemplate::new(TemplateId::CqAnswering, "Q: {query} C: {context}");
        let out = t
            .render(&bindings(&[("query", "{context}"), ("context", "x")]))
            .unwrap();
        assert_eq!(out, "Q: {context} C: x");
    }

    #[test]
    fn non_identifier_braces_are_literal() {
        let t = PromptTemplate::new(TemplateId::CqAnswering, "{ not one } {a-b} {ok}");
        assert_eq!(t.placeholders(), vec!["ok"]);
        assert_eq!(t.render(&bindings(&[("ok", "1")])).unwrap(), "{ not one } {a-b} 1");
    }

    #[test]
    fn template_ids_round_trip_names() {
        for id in TemplateId::ALL {
            assert_eq!(id.as_str().parse::<TemplateId>().unwrap(), id);
        }
        assert!("nope".parse::<TemplateId>().is_err());
    }

    #[test]
    fn overrides_replace_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dl-filter.txt"), "Is it DL? {context}").unwrap();
        let reg = PromptRegistry::with_overrides(dir.path()).unwrap();
        assert_eq!(reg.get(TemplateId::DlFilter).placeholders(), vec!["context"]);
        assert_eq!(
            reg.get(TemplateId::CqAnswering),
            PromptRegistry::builtin().get(TemplateId::CqAnswering)
        );
    }
}
