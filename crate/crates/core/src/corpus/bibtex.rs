//! A forgiving BibTeX reader.
//!
//! Only the handful of fields the pipeline needs are interpreted (`doi`,
//! `title`, `year`, `journal`/`booktitle`). Every problem is reported as an
//! [`BibIssue`] carrying the byte offset of the offending entry, and scanning
//! resumes at the next entry so one broken export line never loses the rest
//! of a file.

use std::collections::HashMap;

use super::{normalize_doi, CitationRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueKind {
    /// Braces (or the opening delimiter) never balance.
    Malformed,
    /// The entry parsed but carries no usable DOI.
    MissingDoi,
    /// A year was present but outside 1900..=2100 or not a number.
    InvalidYear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BibIssue {
    pub offset: usize,
    pub key: Option<String>,
    pub kind: IssueKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Bibliography {
    pub records: Vec<CitationRecord>,
    pub issues: Vec<BibIssue>,
}

impl Bibliography {
    pub fn missing_doi(&self) -> impl Iterator<Item = &BibIssue> {
        self.issues.iter().filter(|i| i.kind == IssueKind::MissingDoi)
    }

    pub fn malformed(&self) -> impl Iterator<Item = &BibIssue> {
        self.issues.iter().filter(|i| i.kind == IssueKind::Malformed)
    }
}

/// Parse zero or more BibTeX entries.
pub fn parse_bibliography(text: &str) -> Bibliography {
    let mut out = Bibliography::default();
    let mut strings: HashMap<String, String> = HashMap::new();
    let bytes = text.as_bytes();
    let mut pos = 0;

    while let Some(rel) = text[pos..].find('@') {
        let at = pos + rel;
        let mut cursor = at + 1;
        let kind_start = cursor;
        while cursor < bytes.len() && (bytes[cursor].is_ascii_alphanumeric() || bytes[cursor] == b'_') {
            cursor += 1;
        }
        let entry_type = text[kind_start..cursor].to_ascii_lowercase();
        if entry_type.is_empty() {
            // stray '@' (e.g. inside free text between entries)
            pos = at + 1;
            continue;
        }
        cursor = skip_ws(bytes, cursor);
        let open = bytes.get(cursor).copied();
        let close = match open {
            Some(b'{') => b'}',
            Some(b'(') => b')',
            _ => {
                out.issues.push(BibIssue {
                    offset: at,
                    key: None,
                    kind: IssueKind::Malformed,
                    message: format!("expected '{{' or '(' after @{entry_type}"),
                });
                pos = cursor.max(at + 1);
                continue;
            }
        };
        let body_start = cursor + 1;
        let Some(body_end) = find_close(bytes, body_start, open.unwrap(), close) else {
            out.issues.push(BibIssue {
                offset: at,
                key: None,
                kind: IssueKind::Malformed,
                message: "unbalanced braces".into(),
            });
            pos = next_entry_start(text, body_start);
            continue;
        };
        pos = body_end + 1;
        let body = &text[body_start..body_end];

        match entry_type.as_str() {
            "comment" | "preamble" => {}
            "string" => {
                if let Ok(fields) = parse_fields(body, &strings) {
                    strings.extend(fields);
                }
            }
            _ => read_entry(at, &text[at..=body_end], body, &strings, &mut out),
        }
    }
    out
}

fn read_entry(offset: usize, raw: &str, body: &str, strings: &HashMap<String, String>, out: &mut Bibliography) {
    let (key, rest) = match body.find(',') {
        Some(i) => (body[..i].trim().to_string(), &body[i + 1..]),
        None => (body.trim().to_string(), ""),
    };
    let key = (!key.is_empty()).then_some(key);
    let fields = match parse_fields(rest, strings) {
        Ok(f) => f,
        Err(message) => {
            out.issues.push(BibIssue {
                offset,
                key,
                kind: IssueKind::Malformed,
                message,
            });
            return;
        }
    };
    let get = |name: &str| fields.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone());

    let doi = get("doi").map(|d| normalize_doi(&d)).unwrap_or_default();
    if doi.is_empty() {
        out.issues.push(BibIssue {
            offset,
            key,
            kind: IssueKind::MissingDoi,
            message: "entry has no DOI".into(),
        });
        return;
    }

    let year = match get("year") {
        None => None,
        Some(y) => match y.trim().parse::<i32>() {
            Ok(v) if (1900..=2100).contains(&v) => Some(v),
            _ => {
                out.issues.push(BibIssue {
                    offset,
                    key: key.clone(),
                    kind: IssueKind::InvalidYear,
                    message: format!("year `{y}` ignored"),
                });
                None
            }
        },
    };

    out.records.push(CitationRecord {
        doi,
        title: get("title").unwrap_or_default(),
        year,
        venue: get("journal").or_else(|| get("booktitle")).unwrap_or_default(),
        raw_entry: raw.to_string(),
    });
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    i
}

fn find_close(bytes: &[u8], start: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 1usize;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Some(i);
            }
        } else if b == b'@' && open == b'{' && line_start(bytes, i) {
            // a new entry began before this one closed
            return None;
        }
    }
    None
}

fn line_start(bytes: &[u8], i: usize) -> bool {
    bytes[..i]
        .iter()
        .rev()
        .take_while(|b| **b != b'\n')
        .all(|b| b.is_ascii_whitespace())
}

fn next_entry_start(text: &str, from: usize) -> usize {
    let bytes = text.as_bytes();
    let mut i = from;
    while let Some(rel) = text.get(i..).and_then(|s| s.find('@')) {
        let at = i + rel;
        if line_start(bytes, at) {
            return at;
        }
        i = at + 1;
    }
    text.len()
}

/// Parse `name = value, ...` pairs. Values may be braced, quoted, bare
/// numbers or `@string` macros, joined with `#`.
fn parse_fields(body: &str, strings: &HashMap<String, String>) -> Result<Vec<(String, String)>, String> {
    let bytes = body.as_bytes();
    let mut fields = Vec::new();
    let mut i = 0;
    loop {
        i = skip_ws_commas(bytes, i);
        if i >= bytes.len() {
            break;
        }
        let name_start = i;
        while i < bytes.len() && bytes[i] != b'=' && bytes[i] != b',' {
            i += 1;
        }
        if i >= bytes.len() || bytes[i] == b',' {
            // trailing junk without '='; tolerate it
            continue;
        }
        let name = body[name_start..i].trim().to_ascii_lowercase();
        i += 1;
        let mut value = String::new();
        loop {
            i = skip_ws(bytes, i);
            match bytes.get(i) {
                Some(b'{') => {
                    let end = find_close(bytes, i + 1, b'{', b'}')
                        .ok_or_else(|| format!("unbalanced braces in field `{name}`"))?;
                    value.push_str(&body[i + 1..end]);
                    i = end + 1;
                }
                Some(b'"') => {
                    let end =
                        find_quote(bytes, i + 1).ok_or_else(|| format!("unterminated quote in field `{name}`"))?;
                    value.push_str(&body[i + 1..end]);
                    i = end + 1;
                }
                Some(_) => {
                    let start = i;
                    while i < bytes.len() && !matches!(bytes[i], b',' | b'#') && !bytes[i].is_ascii_whitespace() {
                        i += 1;
                    }
                    let token = &body[start..i];
                    match strings.get(&token.to_ascii_lowercase()) {
                        Some(expanded) => value.push_str(expanded),
                        None => value.push_str(token),
                    }
                }
                None => break,
            }
            i = skip_ws(bytes, i);
            if bytes.get(i) == Some(&b'#') {
                i += 1;
            } else {
                break;
            }
        }
        fields.push((name, clean_value(&value)));
    }
    Ok(fields)
}

fn skip_ws_commas(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b',') {
        i += 1;
    }
    i
}

fn find_quote(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        match b {
            b'{' => depth += 1,
            b'}' => depth = depth.saturating_sub(1),
            b'"' if depth == 0 && bytes[i - 1] != b'\\' => return Some(i),
            _ => {}
        }
    }
    None
}

fn clean_value(v: &str) -> String {
    v.chars()
        .filter(|c| *c != '{' && *c != '}')
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
