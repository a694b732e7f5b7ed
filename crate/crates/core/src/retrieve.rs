//! Sliding-window chunking, query scoring and budgeted context assembly.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tfidf::{cosine, TfIdf};

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_CHUNK_OVERLAP: usize = 50;
pub const DEFAULT_RETRIEVAL_BUDGET: usize = 1200;

/// Separator placed between admitted chunks in the prompt context.
pub const CONTEXT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenUnit {
    #[default]
    WhitespaceWord,
    Character,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    #[serde(rename = "chunk_overlap", alias = "overlap")]
    pub overlap: usize,
    pub token_unit: TokenUnit,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_CHUNK_OVERLAP,
            token_unit: TokenUnit::WhitespaceWord,
        }
    }
}

impl ChunkingConfig {
    pub fn new(chunk_size: usize, overlap: usize, token_unit: TokenUnit) -> Result<Self> {
        let cfg = Self {
            chunk_size,
            overlap,
            token_unit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be positive".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::Config(format!(
                "chunk_overlap ({}) must be smaller than chunk_size ({})",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    /// Offset of the first token in the document.
    pub start: usize,
    pub text: String,
    /// Token count.
    pub length: usize,
}

impl Chunk {
    pub fn end(&self) -> usize {
        self.start + self.length
    }
}

/// Byte spans of the document's tokens.
fn token_spans(text: &str, unit: TokenUnit) -> Vec<(usize, usize)> {
    match unit {
        TokenUnit::Character => text.char_indices().map(|(i, c)| (i, i + c.len_utf8())).collect(),
        TokenUnit::WhitespaceWord => {
            let mut spans = Vec::new();
            let mut start = None;
            for (i, c) in text.char_indices() {
                match (c.is_whitespace(), start) {
                    (true, Some(s)) => {
                        spans.push((s, i));
                        start = None;
                    }
                    (false, None) => start = Some(i),
                    _ => {}
                }
            }
            if let Some(s) = start {
                spans.push((s, text.len()));
            }
            spans
        }
    }
}

pub fn token_count(text: &str, unit: TokenUnit) -> usize {
    match unit {
        TokenUnit::Character => text.chars().count(),
        TokenUnit::WhitespaceWord => text.split_whitespace().count(),
    }
}

/// Split `text` into windows of `chunk_size` tokens advancing by
/// `chunk_size - overlap`. The last window may be shorter.
pub fn chunk_document(doc_id: &str, text: &str, config: &ChunkingConfig) -> Result<Vec<Chunk>> {
    config.validate()?;
    let spans = token_spans(text, config.token_unit);
    let n = spans.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + config.chunk_size).min(n);
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            index: chunks.len(),
            start,
            text: text[spans[start].0..spans[end - 1].1].to_string(),
            length: end - start,
        });
        if end == n {
            break;
        }
        start += config.stride();
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub chunk_index: usize,
    /// In `[0, 1]`; only comparable within one query.
    pub score: f64,
}

/// Relevance scoring of a document's chunks against one query.
pub trait ChunkScorer: Send + Sync {
    /// One score per chunk, in chunk order.
    fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<ChunkScore>>;
}

/// Tf-idf cosine, with the vectorizer fitted on the document's chunks.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl ChunkScorer for LexicalScorer {
    fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<ChunkScore>> {
        Ok(score_chunks(query, chunks))
    }
}

pub fn score_chunks(query: &str, chunks: &[Chunk]) -> Vec<ChunkScore> {
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let model = TfIdf::fit(&texts);
    let q = model.transform(query);
    chunks
        .iter()
        .map(|c| ChunkScore {
            chunk_index: c.index,
            score: cosine(&q, &model.transform(&c.text)),
        })
        .collect()
}

/// Dense text embeddings, e.g. from a remote embedding service.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Cosine similarity of dense embeddings, clamped to `[0, 1]`.
pub struct EmbeddingScorer<E> {
    embedder: E,
}

impl<E: Embedder> EmbeddingScorer<E> {
    pub fn new(embedder: E) -> Self {
        Self { embedder }
    }
}

impl<E: Embedder> ChunkScorer for EmbeddingScorer<E> {
    fn score(&self, query: &str, chunks: &[Chunk]) -> Result<Vec<ChunkScore>> {
        let mut texts = vec![query];
        texts.extend(chunks.iter().map(|c| c.text.as_str()));
        let vectors = self.embedder.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(Error::InvalidInput(format!(
                "embedder returned {} vectors for {} inputs",
                vectors.len(),
                texts.len()
            )));
        }
        let q = &vectors[0];
        Ok(chunks
            .iter()
            .zip(&vectors[1..])
            .map(|(c, v)| ChunkScore {
                chunk_index: c.index,
                score: dense_cosine(q, v).clamp(0.0, 1.0),
            })
            .collect())
    }
}

fn dense_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Descending score, ties by ascending chunk index.
pub fn rank(mut scores: Vec<ChunkScore>) -> Vec<ChunkScore> {
    scores.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.chunk_index.cmp(&b.chunk_index),
        other => other,
    });
    scores
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalContext {
    pub chunks: Vec<Chunk>,
    pub total_tokens: usize,
    pub budget: usize,
    /// Chunks existed but the best-ranked one alone exceeds the budget.
    pub starved: bool,
}

impl RetrievalContext {
    pub fn text(&self) -> String {
        self.chunks
            .iter()
            .map(|c| c.text.as_str())
            .collect::<Vec<_>>()
            .join(CONTEXT_SEPARATOR)
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }
}

/// Admit whole chunks in rank order until the next one would overflow
/// `budget`. Admission stops at the first chunk that does not fit, so a
/// larger budget always admits a superset.
pub fn assemble_context(ranked: &[ChunkScore], chunks: &[Chunk], budget: usize) -> RetrievalContext {
    let mut admitted = Vec::new();
    let mut total = 0;
    for s in ranked {
        let Some(chunk) = chunks.iter().find(|c| c.index == s.chunk_index) else {
            continue;
        };
        if total + chunk.length > budget {
            break;
        }
        total += chunk.length;
        admitted.push(chunk.clone());
    }
    RetrievalContext {
        starved: admitted.is_empty() && !chunks.is_empty(),
        chunks: admitted,
        total_tokens: total,
        budget,
    }
}

/// Chunking, scoring and assembly bundled for the pipeline stages.
#[derive(Clone)]
pub struct Retriever {
    pub chunking: ChunkingConfig,
    pub budget: usize,
    scorer: Arc<dyn ChunkScorer>,
}

impl std::fmt::Debug for Retriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Retriever")
            .field("chunking", &self.chunking)
            .field("budget", &self.budget)
            .finish_non_exhaustive()
    }
}

impl Default for Retriever {
    fn default() -> Self {
        Self::lexical(ChunkingConfig::default(), DEFAULT_RETRIEVAL_BUDGET)
    }
}

impl Retriever {
    pub fn new(chunking: ChunkingConfig, budget: usize, scorer: Arc<dyn ChunkScorer>) -> Self {
        Self {
            chunking,
            budget,
            scorer,
        }
    }

    pub fn lexical(chunking: ChunkingConfig, budget: usize) -> Self {
        Self::new(chunking, budget, Arc::new(LexicalScorer))
    }

    pub fn chunk(&self, doc_id: &str, text: &str) -> Result<Vec<Chunk>> {
        chunk_document(doc_id, text, &self.chunking)
    }

    pub fn context(&self, query: &str, chunks: &[Chunk]) -> Result<RetrievalContext> {
        if chunks.is_empty() {
            return Ok(assemble_context(&[], chunks, self.budget));
        }
        let scores = self.scorer.score(query, chunks)?;
        Ok(assemble_context(&rank(scores), chunks, self.budget))
    }

    pub fn retrieve(&self, doc_id: &str, text: &str, query: &str) -> Result<RetrievalContext> {
        let chunks = self.chunk(doc_id, text)?;
        self.context(query, &chunks)
    }
}
