//! Competency-question answering over the (publication × CQ × endpoint) matrix.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::corpus::PublicationRecord;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, GatewayError, ModelEndpoint, Stage};
use crate::prompts::{bindings, PromptRegistry, TemplateId};
use crate::retrieve::{Chunk, Retriever};
use crate::store::{Record, RecordStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyQuestion {
    pub id: u32,
    pub text: String,
}

const BUILTIN_CQS: &str = include_str!("../data/competency_questions.tsv");

/// The 28 questions covering a deep-learning pipeline, data to deployment.
pub fn builtin_questions() -> Vec<CompetencyQuestion> {
    parse_questions(BUILTIN_CQS).expect("bundled question list is valid")
}

/// Parse `id<TAB>text` lines. Ids must be unique and contiguous from 1.
pub fn parse_questions(text: &str) -> Result<Vec<CompetencyQuestion>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, q) = line
            .split_once('\t')
            .ok_or_else(|| Error::InvalidInput(format!("question line {}: expected `id<TAB>text`", n + 1)))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("question line {}: bad id `{id}`", n + 1)))?;
        out.push(CompetencyQuestion {
            id,
            text: q.trim().to_string(),
        });
    }
    for (i, q) in out.iter().enumerate() {
        if q.id != i as u32 + 1 {
            return Err(Error::InvalidInput(format!(
                "question ids must be contiguous from 1; found {} at position {}",
                q.id,
                i + 1
            )));
        }
    }
    Ok(out)
}

pub fn load_questions(path: &Path) -> Result<Vec<CompetencyQuestion>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_questions(&text)
}

const ANSWER_MARKERS: [&str; 2] = ["Helpful Answer::", "Answer::"];

/// Drop everything up to and including the last answer marker, then trim.
/// Colons trailing a marker (`Answer:::`) are dropped with it.
pub fn strip_answer_markers(text: &str) -> &str {
    let last = ANSWER_MARKERS
        .iter()
        .filter_map(|m| text.rfind(m).map(|i| i + m.len()))
        .max();
    match last {
        Some(end) => text[end..].trim_start_matches(':').trim(),
        None => text.trim(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextualAnswer {
    pub doi: String,
    pub cq_id: u32,
    pub endpoint: String,
    pub raw_text: String,
    pub clean_text: String,
    pub duration_ms: u64,
}

impl TextualAnswer {
    pub fn record(&self) -> AnswerRecord {
        AnswerRecord {
            doi: self.doi.clone(),
            cq_id: self.cq_id,
            endpoint: self.endpoint.clone(),
            clean_text: self.clean_text.clone(),
            duration_ms: self.duration_ms,
        }
    }
}

/// One line of the answer store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub doi: String,
    pub cq_id: u32,
    pub endpoint: String,
    pub clean_text: String,
    pub duration_ms: u64,
}

pub type AnswerKey = (String, u32, String);

impl Record for AnswerRecord {
    type Key = AnswerKey;

    fn key(&self) -> AnswerKey {
        (self.doi.clone(), self.cq_id, self.endpoint.clone())
    }
}

fn cq_prompt(prompts: &PromptRegistry, cq: &CompetencyQuestion, context: &str) -> Result<String> {
    prompts.render(
        TemplateId::CqAnswering,
        &bindings(&[("query", &cq.text), ("context", context)]),
    )
}

fn ask(
    gateway: &Gateway,
    endpoint: &ModelEndpoint,
    doi: &str,
    cq: &CompetencyQuestion,
    prompt: &str,
) -> std::result::Result<TextualAnswer, GatewayError> {
    let req = ChatRequest::new(endpoint, prompt, doi, Stage::Rag);
    let resp = gateway.complete(endpoint, &req)?;
    Ok(TextualAnswer {
        doi: doi.to_string(),
        cq_id: cq.id,
        endpoint: endpoint.name.clone(),
        clean_text: strip_answer_markers(&resp.text).to_string(),
        raw_text: resp.text,
        duration_ms: resp.duration_ms,
    })
}

/// Retrieve context for `cq` from the publication and ask `endpoint`.
pub fn answer_cq(
    publication: &PublicationRecord,
    cq: &CompetencyQuestion,
    endpoint: &ModelEndpoint,
    retriever: &Retriever,
    prompts: &PromptRegistry,
    gateway: &Gateway,
) -> Result<TextualAnswer> {
    if publication.full_text.trim().is_empty() {
        return Err(Error::InvalidInput(format!("{} has no full text", publication.doi())));
    }
    let context = retriever.retrieve(publication.doi(), &publication.full_text, &cq.text)?;
    let prompt = cq_prompt(prompts, cq, &context.text())?;
    Ok(ask(gateway, endpoint, publication.doi(), cq, &prompt)?)
}

/// Everything `run_matrix` needs besides the store.
pub struct MatrixJob<'a> {
    pub publications: &'a [PublicationRecord],
    pub questions: &'a [CompetencyQuestion],
    pub endpoints: &'a [ModelEndpoint],
    pub retriever: &'a Retriever,
    pub prompts: &'a PromptRegistry,
    pub gateway: &'a Gateway,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixFailure {
    pub doi: String,
    pub cq_id: u32,
    pub endpoint: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatrixSummary {
    /// Cells in the full matrix.
    pub expected: usize,
    /// Cells already present before this run.
    pub existing: usize,
    /// Requests issued (first pass plus the single retry pass).
    pub requests: usize,
    pub completed: usize,
    pub failures: Vec<MatrixFailure>,
}

impl MatrixSummary {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.existing + self.completed == self.expected
    }
}

struct Unit<'a> {
    publication: usize,
    cq: &'a CompetencyQuestion,
    endpoints: Vec<&'a ModelEndpoint>,
}

pub(crate) fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Answer every missing (publication, CQ, endpoint) cell, appending to
/// `store`. Failed cells are retried once after the first pass.
pub fn run_matrix(job: &MatrixJob<'_>, store: &RecordStore<AnswerRecord>) -> Result<MatrixSummary> {
    let mut summary = MatrixSummary {
        expected: job.publications.len() * job.questions.len() * job.endpoints.len(),
        ..Default::default()
    };
    let mut units = Vec::new();
    for (pi, p) in job.publications.iter().enumerate() {
        for cq in job.questions {
            let pending: Vec<&ModelEndpoint> = job
                .endpoints
                .iter()
                .filter(|e| !store.contains(&(p.doi().to_string(), cq.id, e.name.clone())))
                .collect();
            summary.existing += job.endpoints.len() - pending.len();
            if !pending.is_empty() {
                units.push(Unit {
                    publication: pi,
                    cq,
                    endpoints: pending,
                });
            }
        }
    }
    if units.is_empty() {
        return Ok(summary);
    }
    info!(
        cells = units.iter().map(|u| u.endpoints.len()).sum::<usize>(),
        "answering"
    );

    let pool = thread_pool(job.parallelism)?;
    let mut needed: Vec<usize> = units.iter().map(|u| u.publication).collect();
    needed.dedup();
    let chunks: HashMap<usize, Vec<Chunk>> = pool.install(|| {
        needed
            .par_iter()
            .map(|&pi| {
                let p = &job.publications[pi];
                job.retriever.chunk(p.doi(), &p.full_text).map(|c| (pi, c))
            })
            .collect::<Result<_>>()
    })?;

    let run_unit = |unit: &Unit<'_>| -> Result<Vec<(String, std::result::Result<TextualAnswer, GatewayError>)>> {
        let p = &job.publications[unit.publication];
        let context = job.retriever.context(&unit.cq.text, &chunks[&unit.publication])?;
        let prompt = cq_prompt(job.prompts, unit.cq, &context.text())?;
        Ok(unit
            .endpoints
            .iter()
            .map(|e| (e.name.clone(), ask(job.gateway, e, p.doi(), unit.cq, &prompt)))
            .collect())
    };

    let mut retry_units = Vec::new();
    for pass in 0..2 {
        let batch = if pass == 0 { &units } else { &retry_units };
        if batch.is_empty() {
            break;
        }
        let results = pool.install(|| batch.par_iter().map(run_unit).collect::<Result<Vec<_>>>())?;
        let mut failed = Vec::new();
        for (unit, outcomes) in batch.iter().zip(results) {
            let mut failed_endpoints = Vec::new();
            for (name, outcome) in outcomes {
                summary.requests += 1;
                match outcome {
                    Ok(answer) => {
                        store.append(answer.record())?;
                        summary.completed += 1;
                    }
                    Err(e) => {
                        let endpoint = unit.endpoints.iter().find(|x| x.name == name).copied();
                        if pass == 0 {
                            warn!(error = %e, "answer failed; will retry at end of run");
                            failed_endpoints.extend(endpoint);
                        } else {
                            summary.failures.push(MatrixFailure {
                                doi: job.publications[unit.publication].doi().to_string(),
                                cq_id: unit.cq.id,
                                endpoint: name,
                                message: e.to_string(),
                            });
                        }
                    }
                }
            }
            if !failed_endpoints.is_empty() {
                failed.push(Unit {
                    publication: unit.publication,
                    cq: unit.cq,
                    endpoints: failed_endpoints,
                });
            }
        }
        retry_units = failed;
    }
    Ok(summary)
}
