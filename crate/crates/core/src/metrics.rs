//! Agreement and similarity statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::categorize::{CategoricalAnswer, Decision, VoteRecord};
use crate::error::{Error, Result};
use crate::extraction::{AnswerRecord, CompetencyQuestion};
use crate::tfidf::{cosine, TfIdf};

pub type Label = Decision;
pub type SeriesKey = (String, u32);

/// Labels aligned to unique (doi, cq) keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSeries {
    keys: Vec<SeriesKey>,
    labels: Vec<Label>,
}

impl LabelSeries {
    pub fn new(keys: Vec<SeriesKey>, labels: Vec<Label>) -> Result<Self> {
        if keys.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: keys.len(),
                right: labels.len(),
            });
        }
        let mut seen = HashSet::with_capacity(keys.len());
        for k in &keys {
            if !seen.insert(k) {
                return Err(Error::InvalidInput(format!("duplicate series key ({}, {})", k.0, k.1)));
            }
        }
        Ok(LabelSeries { keys, labels })
    }

    /// Keys are synthesized as ("", 0..n); handy when only the labels matter.
    pub fn from_labels(labels: Vec<Label>) -> Self {
        let keys = (0..labels.len() as u32).map(|i| (String::new(), i)).collect();
        LabelSeries { keys, labels }
    }

    /// Sorted by key.
    pub fn from_map(map: &BTreeMap<SeriesKey, Label>) -> Self {
        LabelSeries {
            keys: map.keys().cloned().collect(),
            labels: map.values().copied().collect(),
        }
    }

    pub fn keys(&self) -> &[SeriesKey] {
        &self.keys
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix2x2 {
    pub yy: u64,
    pub yn: u64,
    pub ny: u64,
    pub nn: u64,
}

impl ConfusionMatrix2x2 {
    pub fn from_series(a: &LabelSeries, b: &LabelSeries) -> Result<Self> {
        check_aligned(a, b)?;
        let mut m = ConfusionMatrix2x2::default();
        for (x, y) in a.labels.iter().zip(&b.labels) {
            match (x, y) {
                (Decision::Yes, Decision::Yes) => m.yy += 1,
                (Decision::Yes, Decision::No) => m.yn += 1,
                (Decision::No, Decision::Yes) => m.ny += 1,
                (Decision::No, Decision::No) => m.nn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.yy + self.yn + self.ny + self.nn
    }

    pub fn agreements(&self) -> u64 {
        self.yy + self.nn
    }

    /// Cohen's kappa, computed on integer counts. A constant pair of series
    /// gives 1.0 when they agree and 0.0 otherwise.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.total() as i128;
        if n == 0 {
            return Err(Error::InvalidInput("kappa of an empty series".into()));
        }
        let (yy, yn, ny, nn) = (self.yy as i128, self.yn as i128, self.ny as i128, self.nn as i128);
        let chance = (yy + yn) * (yy + ny) + (ny + nn) * (yn + nn);
        let observed = yy + nn;
        let denom = n * n - chance;
        if denom == 0 {
            if observed == n {
                return Ok(1.0);
            }
            warn!("kappa undefined for constant, disagreeing series; reporting 0");
            return Ok(0.0);
        }
        Ok((n * observed - chance) as f64 / denom as f64)
    }
}

fn check_aligned(a: &LabelSeries, b: &LabelSeries) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    match a.keys.iter().zip(&b.keys).position(|(x, y)| x != y) {
        Some(position) => Err(Error::KeyMismatch { position }),
        None => Ok(()),
    }
}

pub fn cohen_kappa(a: &LabelSeries, b: &LabelSeries) -> Result<f64> {
    ConfusionMatrix2x2::from_series(a, b)?.kappa()
}

/// (positions where labels match, series length)
pub fn agreement_counts(a: &LabelSeries, b: &LabelSeries) -> Result<(usize, usize)> {
    check_aligned(a, b)?;
    let agree = a.labels.iter().zip(&b.labels).filter(|(x, y)| x == y).count();
    Ok((agree, a.len()))
}

/// Model names with a symmetric matrix of average cosine values.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub models: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.models.iter().position(|m| m == a)?;
        let j = self.models.iter().position(|m| m == b)?;
        Some(self.values[i][j])
    }

    /// Upper-triangle pairs in name order.
    pub fn pairs(&self) -> Vec<(String, String, f64)> {
        let mut out = Vec::new();
        for i in 0..self.models.len() {
            for j in i + 1..self.models.len() {
                out.push((self.models[i].clone(), self.models[j].clone(), self.values[i][j]));
            }
        }
        out
    }
}

/// Clean answer texts keyed by endpoint, then by (doi, cq).
pub type AnswersByEndpoint = BTreeMap<String, BTreeMap<SeriesKey, String>>;

pub fn group_answers<'a>(answers: impl IntoIterator<Item = &'a AnswerRecord>) -> AnswersByEndpoint {
    let mut out = AnswersByEndpoint::new();
    for a in answers {
        out.entry(a.endpoint.clone())
            .or_default()
            .insert((a.doi.clone(), a.cq_id), a.clean_text.clone());
    }
    out
}

/// tf-idf fitted on every answer text; per endpoint pair, cosines averaged
/// uniformly over the shared keys.
pub fn average_pairwise_similarity(answers: &AnswersByEndpoint) -> Result<SimilarityMatrix> {
    let models: Vec<String> = answers.keys().cloned().collect();
    let keys: Vec<&SeriesKey> = match answers.values().next() {
        Some(m) => m.keys().collect(),
        None => Vec::new(),
    };
    for (name, m) in answers {
        if m.len() != keys.len() || !m.keys().zip(&keys).all(|(a, b)| a == *b) {
            return Err(Error::InvalidInput(format!(
                "endpoint `{name}` does not answer the same (doi, cq) keys as the others"
            )));
        }
    }
    let corpus: Vec<&str> = answers.values().flat_map(|m| m.values().map(String::as_str)).collect();
    let tfidf = TfIdf::fit(&corpus);
    let vectors: Vec<Vec<_>> = answers
        .values()
        .map(|m| m.values().map(|t| tfidf.transform(t)).collect())
        .collect();

    let k = models.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        values[i][i] = if vectors[i].iter().any(|v| !v.is_zero()) {
            1.0
        } else {
            0.0
        };
        for j in i + 1..k {
            let avg = if keys.is_empty() {
                0.0
            } else {
                let sum: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| cosine(a, b)).sum();
                sum / keys.len() as f64
            };
            values[i][j] = avg;
            values[j][i] = avg;
        }
    }
    Ok(SimilarityMatrix { models, values })
}

/// Verdict decisions keyed by endpoint, then by (doi, cq).
pub type VerdictsByEndpoint = BTreeMap<String, BTreeMap<SeriesKey, Label>>;

pub fn group_verdicts<'a>(verdicts: impl IntoIterator<Item = &'a CategoricalAnswer>) -> VerdictsByEndpoint {
    let mut out = VerdictsByEndpoint::new();
    for v in verdicts {
        out.entry(v.endpoint.clone())
            .or_default()
            .insert((v.doi.clone(), v.cq_id), v.verdict.decision());
    }
    out
}

/// Kappa for every endpoint pair, in name order.
pub fn pairwise_kappa(verdicts: &VerdictsByEndpoint) -> Result<Vec<(String, String, f64)>> {
    let series: Vec<(&String, LabelSeries)> = verdicts.iter().map(|(n, m)| (n, LabelSeries::from_map(m))).collect();
    let mut out = Vec::new();
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            out.push((
                series[i].0.clone(),
                series[j].0.clone(),
                cohen_kappa(&series[i].1, &series[j].1)?,
            ));
        }
    }
    Ok(out)
}

/// Keep only entries whose doi is in `keep`.
pub fn restrict<V: Clone>(
    grouped: &BTreeMap<String, BTreeMap<SeriesKey, V>>,
    keep: &HashSet<&str>,
) -> BTreeMap<String, BTreeMap<SeriesKey, V>> {
    grouped
        .iter()
        .map(|(n, m)| {
            let m = m
                .iter()
                .filter(|(k, _)| keep.contains(k.0.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            (n.clone(), m)
        })
        .collect()
}

/// One human judgment of one endpoint's verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub endpoint: String,
    pub doi: String,
    pub cq_id: u32,
    pub label: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub endpoint: String,
    pub agreements: usize,
    pub total: usize,
    pub kappa: f64,
}

/// Per endpoint: model verdicts against human labels over the annotated keys.
/// Rows follow `order`; endpoints it does not name come after, by name.
pub fn human_agreement(
    verdicts: &VerdictsByEndpoint,
    annotations: &[Annotation],
    order: &[String],
) -> Result<Vec<AgreementRow>> {
    let mut human: BTreeMap<&str, BTreeMap<SeriesKey, Label>> = BTreeMap::new();
    for a in annotations {
        if human
            .entry(a.endpoint.as_str())
            .or_default()
            .insert((a.doi.clone(), a.cq_id), a.label)
            .is_some()
        {
            return Err(Error::InvalidInput(format!(
                "duplicate annotation for {} ({}, {})",
                a.endpoint, a.doi, a.cq_id
            )));
        }
    }
    let mut rows = Vec::new();
    for (endpoint, labels) in human {
        let model = verdicts
            .get(endpoint)
            .ok_or_else(|| Error::InvalidInput(format!("no verdicts for annotated endpoint `{endpoint}`")))?;
        let mut predicted = BTreeMap::new();
        for k in labels.keys() {
            let v = model
                .get(k)
                .ok_or_else(|| Error::InvalidInput(format!("no verdict from `{endpoint}` for ({}, {})", k.0, k.1)))?;
            predicted.insert(k.clone(), *v);
        }
        let a = LabelSeries::from_map(&predicted);
        let b = LabelSeries::from_map(&labels);
        let (agreements, total) = agreement_counts(&a, &b)?;
        rows.push(AgreementRow {
            endpoint: endpoint.to_string(),
            agreements,
            total,
            kappa: cohen_kappa(&a, &b)?,
        });
    }
    rows.sort_by_key(|r| order.iter().position(|o| *o == r.endpoint).unwrap_or(order.len()));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageRow {
    pub cq_id: u32,
    pub question: String,
    pub before: usize,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
    pub publications_before: usize,
    pub publications_after: usize,
}

impl CoverageTable {
    pub fn total_before(&self) -> usize {
        self.rows.iter().map(|r| r.before).sum()
    }

    pub fn total_after(&self) -> usize {
        self.rows.iter().map(|r| r.after).sum()
    }

    pub fn queries_before(&self) -> usize {
        self.publications_before * self.rows.len()
    }

    pub fn queries_after(&self) -> usize {
        self.publications_after * self.rows.len()
    }
}

/// Yes decisions per CQ, over all voted publications and over those kept by
/// the filter.
pub fn per_cq_coverage(votes: &[VoteRecord], kept: &HashSet<&str>, questions: &[CompetencyQuestion]) -> CoverageTable {
    let dois: BTreeSet<&str> = votes.iter().map(|v| v.doi.as_str()).collect();
    let mut before: HashMap<u32, usize> = HashMap::new();
    let mut after: HashMap<u32, usize> = HashMap::new();
    for v in votes.iter().filter(|v| v.decision == Decision::Yes) {
        *before.entry(v.cq_id).or_default() += 1;
        if kept.contains(v.doi.as_str()) {
            *after.entry(v.cq_id).or_default() += 1;
        }
    }
    CoverageTable {
        rows: questions
            .iter()
            .map(|q| CoverageRow {
                cq_id: q.id,
                question: q.text.clone(),
                before: before.get(&q.id).copied().unwrap_or(0),
                after: after.get(&q.id).copied().unwrap_or(0),
            })
            .collect(),
        publications_before: dois.len(),
        publications_after: dois.iter().filter(|d| kept.contains(*d)).count(),
    }
}

/// Default pairing of CQs with the earlier study's reproducibility variables.
pub const DEFAULT_VARIABLE_MAPPING: [(u32, &str); 6] = [
    (5, "Dataset"),
    (10, "Source code"),
    (19, "Open source framework"),
    (12, "Model architecture"),
    (13, "Hyperparameters"),
    (22, "Metrics availability"),
];

pub fn default_mapping() -> Vec<(u32, String)> {
    DEFAULT_VARIABLE_MAPPING
        .iter()
        .map(|(q, v)| (*q, v.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLabel {
    pub doi: String,
    pub variable: String,
    pub label: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRow {
    pub variable: String,
    pub cq_id: u32,
    pub agreements: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceComparison {
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceComparison {
    pub fn agreements(&self) -> usize {
        self.rows.iter().map(|r| r.agreements).sum()
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(|r| r.total).sum()
    }
}

/// Per mapped variable, how often the vote decision equals the reference label.
pub fn compare_with_reference(
    mapping: &[(u32, String)],
    votes: &[VoteRecord],
    reference: &[ReferenceLabel],
) -> Result<ReferenceComparison> {
    let decided: HashMap<(&str, u32), Decision> =
        votes.iter().map(|v| ((v.doi.as_str(), v.cq_id), v.decision)).collect();
    let mut rows = Vec::new();
    for (cq_id, variable) in mapping {
        let mut row = ReferenceRow {
            variable: variable.clone(),
            cq_id: *cq_id,
            agreements: 0,
            total: 0,
        };
        for r in reference.iter().filter(|r| &r.variable == variable) {
            let d = decided.get(&(r.doi.as_str(), *cq_id)).ok_or_else(|| {
                Error::InvalidInput(format!("no vote for ({}, CQ{cq_id}) referenced by `{variable}`", r.doi))
            })?;
            row.total += 1;
            row.agreements += (*d == r.label) as usize;
        }
        rows.push(row);
    }
    Ok(ReferenceComparison { rows })
}
