//! Textual answers to Yes/No verdicts, hard majority voting, and the
//! deep-learning publication filter.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::corpus::PublicationRecord;
use crate::error::{Error, Result};
use crate::extraction::{thread_pool, AnswerRecord, CompetencyQuestion};
use crate::gateway::{ChatRequest, Gateway, ModelEndpoint, Stage};
use crate::prompts::{bindings, PromptRegistry, TemplateId};
use crate::retrieve::Retriever;
use crate::store::{Record, RecordStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Unparseable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Yes => "Yes",
            Verdict::No => "No",
            Verdict::Unparseable => "Unparseable",
        }
    }

    /// Voting view: anything but an explicit Yes is a No.
    pub fn decision(self) -> Decision {
        match self {
            Verdict::Yes => Decision::Yes,
            _ => Decision::No,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Decision {
    Yes,
    No,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Yes => "Yes",
            Decision::No => "No",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "true" | "1" => Ok(Decision::Yes),
            "no" | "n" | "false" | "0" => Ok(Decision::No),
            other => Err(Error::InvalidInput(format!("expected Yes or No, got `{other}`"))),
        }
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const RESPONSE_PREFIX: &str = "response:";

fn strip_line_markers(mut line: &str) -> &str {
    loop {
        let before = line;
        line = line.trim_start().trim_start_matches('*').trim_start();
        if line.len() >= 9 && line[..9].eq_ignore_ascii_case("answer:::") {
            line = line[9..].trim_start_matches(':');
        }
        if line.len() == before.len() {
            return line;
        }
    }
}

/// Verdict from the last line that starts with `Response:`.
pub fn parse_categorical_response(text: &str) -> Verdict {
    let Some(value) = text
        .lines()
        .map(strip_line_markers)
        .filter(|l| {
            l.len() >= RESPONSE_PREFIX.len() && l[..RESPONSE_PREFIX.len()].eq_ignore_ascii_case(RESPONSE_PREFIX)
        })
        .map(|l| &l[RESPONSE_PREFIX.len()..])
        .next_back()
    else {
        return Verdict::Unparseable;
    };
    let value = value.trim().trim_matches('*').trim();
    let word = value
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_end_matches(['.', ',', ';', '!', '*']);
    if word.eq_ignore_ascii_case("yes") {
        Verdict::Yes
    } else if word.eq_ignore_ascii_case("no") {
        Verdict::No
    } else {
        Verdict::Unparseable
    }
}

/// One line of the verdict store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalAnswer {
    pub doi: String,
    pub cq_id: u32,
    pub endpoint: String,
    pub verdict: Verdict,
    #[serde(skip)]
    pub note: Option<String>,
}

impl Record for CategoricalAnswer {
    type Key = (String, u32, String);

    fn key(&self) -> Self::Key {
        (self.doi.clone(), self.cq_id, self.endpoint.clone())
    }
}

/// Ask the endpoint that wrote `answer` to reduce it to Yes or No.
pub fn to_categorical(
    question: &CompetencyQuestion,
    answer: &AnswerRecord,
    endpoint: &ModelEndpoint,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<CategoricalAnswer> {
    let prompt = prompts.render(
        TemplateId::CategoricalConversion,
        &bindings(&[("Question", &question.text), ("Answer", &answer.clean_text)]),
    )?;
    let req = ChatRequest::new(endpoint, prompt, &answer.doi, Stage::Categorize);
    let (verdict, note) = match gateway.complete(endpoint, &req) {
        Ok(resp) => (parse_categorical_response(&resp.text), None),
        Err(e) => {
            warn!(doi = %answer.doi, cq = answer.cq_id, error = %e, "conversion failed");
            (Verdict::Unparseable, Some(e.to_string()))
        }
    };
    Ok(CategoricalAnswer {
        doi: answer.doi.clone(),
        cq_id: answer.cq_id,
        endpoint: answer.endpoint.clone(),
        verdict,
        note,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConversionSummary {
    pub existing: usize,
    pub converted: usize,
    pub failed: usize,
    /// Answers whose endpoint is not configured for this run.
    pub skipped: usize,
}

/// Convert every stored answer that has no verdict yet.
pub fn run_conversion(
    answers: &[AnswerRecord],
    questions: &[CompetencyQuestion],
    endpoints: &[ModelEndpoint],
    prompts: &PromptRegistry,
    gateway: &Gateway,
    store: &RecordStore<CategoricalAnswer>,
    parallelism: usize,
) -> Result<ConversionSummary> {
    let qs: HashMap<u32, &CompetencyQuestion> = questions.iter().map(|q| (q.id, q)).collect();
    let eps: HashMap<&str, &ModelEndpoint> = endpoints.iter().map(|e| (e.name.as_str(), e)).collect();
    let mut summary = ConversionSummary::default();
    let mut todo = Vec::new();
    for a in answers {
        if store.contains(&a.key()) {
            summary.existing += 1;
            continue;
        }
        let Some(ep) = eps.get(a.endpoint.as_str()) else {
            summary.skipped += 1;
            continue;
        };
        let q = qs
            .get(&a.cq_id)
            .ok_or_else(|| Error::InvalidInput(format!("answer refers to unknown CQ {}", a.cq_id)))?;
        todo.push((a, *q, *ep));
    }
    let pool = thread_pool(parallelism)?;
    let results = pool.install(|| {
        todo.par_iter()
            .map(|(a, q, ep)| to_categorical(q, a, ep, prompts, gateway))
            .collect::<Result<Vec<_>>>()
    })?;
    for r in results {
        if r.note.is_some() {
            summary.failed += 1;
        }
        summary.converted += 1;
        store.append(r)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    No,
    Yes,
}

impl FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no" => Ok(TieRule::No),
            "yes" => Ok(TieRule::Yes),
            other => Err(Error::InvalidInput(format!(
                "tie rule must be `yes` or `no`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteTally {
    pub yes_count: u32,
    pub no_count: u32,
    pub decision: Decision,
}

/// Hard majority over the verdicts; Unparseable counts as No.
pub fn majority_vote(verdicts: &[Verdict], tie_rule: TieRule) -> Result<VoteTally> {
    if verdicts.is_empty() {
        return Err(Error::EmptyVote);
    }
    let yes_count = verdicts.iter().filter(|v| v.decision() == Decision::Yes).count() as u32;
    let no_count = verdicts.len() as u32 - yes_count;
    let decision = match yes_count.cmp(&no_count) {
        std::cmp::Ordering::Greater => Decision::Yes,
        std::cmp::Ordering::Less => Decision::No,
        std::cmp::Ordering::Equal => match tie_rule {
            TieRule::Yes => Decision::Yes,
            TieRule::No => Decision::No,
        },
    };
    Ok(VoteTally {
        yes_count,
        no_count,
        decision,
    })
}

/// One line of the vote store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub doi: String,
    pub cq_id: u32,
    pub yes_count: u32,
    pub no_count: u32,
    pub decision: Decision,
}

impl Record for VoteRecord {
    type Key = (String, u32);

    fn key(&self) -> Self::Key {
        (self.doi.clone(), self.cq_id)
    }
}

/// Group verdicts by (doi, cq) and vote each group. Output sorted by key.
pub fn vote_all(verdicts: &[CategoricalAnswer], tie_rule: TieRule) -> Result<Vec<VoteRecord>> {
    let mut groups: BTreeMap<(&str, u32), Vec<Verdict>> = BTreeMap::new();
    for v in verdicts {
        groups.entry((v.doi.as_str(), v.cq_id)).or_default().push(v.verdict);
    }
    groups
        .into_iter()
        .map(|((doi, cq_id), vs)| {
            let t = majority_vote(&vs, tie_rule)?;
            Ok(VoteRecord {
                doi: doi.to_string(),
                cq_id,
                yes_count: t.yes_count,
                no_count: t.no_count,
                decision: t.decision,
            })
        })
        .collect()
}

pub const DL_FILTER_QUERY: &str =
    "Does this publication develop or apply a deep learning model as part of its own methodology, \
rather than only mentioning deep learning related terms?";

/// One line of the filter store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub doi: String,
    pub is_dl_study: bool,
    pub endpoint: String,
}

impl Record for FilterVerdict {
    type Key = String;

    fn key(&self) -> String {
        self.doi.clone()
    }
}

/// Single-endpoint judgment over retrieved context. `None` when the call
/// fails or the reply has no usable Response line.
pub fn filter_dl_publication(
    publication: &PublicationRecord,
    endpoint: &ModelEndpoint,
    retriever: &Retriever,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<Option<FilterVerdict>> {
    let context = retriever.retrieve(publication.doi(), &publication.full_text, DL_FILTER_QUERY)?;
    let prompt = prompts.render(
        TemplateId::DlFilter,
        &bindings(&[("query", DL_FILTER_QUERY), ("context", &context.text())]),
    )?;
    let req = ChatRequest::new(endpoint, prompt, publication.doi(), Stage::Filter);
    let verdict = match gateway.complete(endpoint, &req) {
        Ok(resp) => parse_categorical_response(&resp.text),
        Err(e) => {
            warn!(doi = publication.doi(), error = %e, "filter call failed; publication retained");
            return Ok(None);
        }
    };
    let is_dl_study = match verdict {
        Verdict::Yes => true,
        Verdict::No => false,
        Verdict::Unparseable => {
            warn!(
                doi = publication.doi(),
                "filter reply unparseable; publication retained"
            );
            return Ok(None);
        }
    };
    Ok(Some(FilterVerdict {
        doi: publication.doi().to_string(),
        is_dl_study,
        endpoint: endpoint.name.clone(),
    }))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterSummary {
    pub existing: usize,
    pub judged: usize,
    pub undecided: usize,
}

pub fn run_filter(
    publications: &[PublicationRecord],
    endpoint: &ModelEndpoint,
    retriever: &Retriever,
    prompts: &PromptRegistry,
    gateway: &Gateway,
    store: &RecordStore<FilterVerdict>,
    parallelism: usize,
) -> Result<FilterSummary> {
    let mut summary = FilterSummary::default();
    let todo: Vec<&PublicationRecord> = publications
        .iter()
        .filter(|p| {
            let done = store.contains(&p.doi().to_string());
            summary.existing += done as usize;
            !done
        })
        .collect();
    let pool = thread_pool(parallelism)?;
    let results = pool.install(|| {
        todo.par_iter()
            .map(|p| filter_dl_publication(p, endpoint, retriever, prompts, gateway))
            .collect::<Result<Vec<_>>>()
    })?;
    for r in results {
        match r {
            Some(v) => {
                summary.judged += 1;
                store.append(v)?;
            }
            None => summary.undecided += 1,
        }
    }
    Ok(summary)
}

/// DOIs kept after filtering: everything not explicitly judged non-DL.
pub fn retained<'a>(dois: impl IntoIterator<Item = &'a str>, filter: &[FilterVerdict]) -> Vec<&'a str> {
    let excluded: std::collections::HashSet<&str> = filter
        .iter()
        .filter(|f| !f.is_dl_study)
        .map(|f| f.doi.as_str())
        .collect();
    dois.into_iter().filter(|d| !excluded.contains(d)).collect()
}
