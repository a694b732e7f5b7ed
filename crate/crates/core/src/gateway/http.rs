//! OpenAI-style HTTP wire format.
//!
//! Request: `POST {base_url}/chat/completions` with
//! `{"model", "messages": [{"role","content"}], "temperature", "max_tokens"?}`;
//! the reply text is `choices[0].message.content`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ureq::Agent;

use super::{Backend, BackendError, BackendErrorKind, BackendReply, ChatRequest, ModelEndpoint};
use crate::error::{Error, Result};
use crate::retrieve::Embedder;

pub const SYSTEM_MESSAGE: &str = "You answer questions about scientific publications using only the provided context.";

#[derive(Debug, Serialize)]
pub(crate) struct Message<'a> {
    pub role: &'a str,
    pub content: &'a str,
}

#[derive(Debug, Serialize)]
pub(crate) struct CompletionBody<'a> {
    pub model: &'a str,
    pub messages: Vec<Message<'a>>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

pub(crate) fn completion_body<'a>(endpoint: &'a ModelEndpoint, prompt: &'a str) -> CompletionBody<'a> {
    CompletionBody {
        model: &endpoint.model_id,
        messages: vec![
            Message {
                role: "system",
                content: SYSTEM_MESSAGE,
            },
            Message {
                role: "user",
                content: prompt,
            },
        ],
        temperature: endpoint.temperature,
        max_tokens: endpoint.max_tokens,
    }
}

pub(crate) fn completion_text(body: &Value) -> Option<String> {
    body.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

fn endpoint_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn classify_status(status: u16, retry_after: Option<Duration>, body: &str) -> BackendError {
    let kind = match status {
        401 | 403 => BackendErrorKind::Auth,
        429 => BackendErrorKind::RateLimited(retry_after),
        408 | 500..=599 => BackendErrorKind::Transient,
        _ => BackendErrorKind::Permanent,
    };
    let snippet: String = body.chars().take(200).collect();
    BackendError::new(kind, format!("HTTP {status}: {snippet}"))
}

#[derive(Debug, Clone)]
pub struct HttpBackend {
    agent: Agent,
}

impl Default for HttpBackend {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Self {
        Self { agent: agent(timeout) }
    }
}

impl Backend for HttpBackend {
    fn send(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let url = endpoint_url(&endpoint.base_url, "chat/completions");
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if !endpoint.api_key_env.is_empty() {
            let key = std::env::var(&endpoint.api_key_env).map_err(|_| {
                BackendError::new(
                    BackendErrorKind::Auth,
                    format!("environment variable {} is not set", endpoint.api_key_env),
                )
            })?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let started = Instant::now();
        let mut resp = req
            .send_json(completion_body(endpoint, &request.prompt))
            .map_err(|e| BackendError::new(BackendErrorKind::Transient, e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::new(BackendErrorKind::Transient, e.to_string()))?;
        let elapsed = started.elapsed();
        if !(200..300).contains(&status) {
            return Err(classify_status(status, retry_after, &text));
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::new(BackendErrorKind::Permanent, format!("invalid JSON: {e}")))?;
        let content = completion_text(&json).ok_or_else(|| {
            BackendError::new(
                BackendErrorKind::Permanent,
                "response has no choices[0].message.content",
            )
        })?;
        Ok(BackendReply { text: content, elapsed })
    }
}

/// `POST {base_url}/embeddings` with `{"model", "input": [..]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub base_url: String,
    pub model_id: String,
    pub api_key_env: String,
    agent: Agent,
}

#[derive(Deserialize)]
struct EmbeddingData {
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingData>,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: api_key_env.into(),
            agent: agent(Duration::from_secs(120)),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let url = endpoint_url(&self.base_url, "embeddings");
        let mut req = self.agent.post(&url);
        if !self.api_key_env.is_empty() {
            let key = std::env::var(&self.api_key_env)
                .map_err(|_| Error::Config(format!("environment variable {} is not set", self.api_key_env)))?;
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let gateway_err = |message: String| Error::Gateway {
            endpoint: self.base_url.clone(),
            message,
        };
        let mut resp = req
            .send_json(serde_json::json!({ "model": self.model_id, "input": texts }))
            .map_err(|e| gateway_err(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(gateway_err(format!("HTTP {status}")));
        }
        let body: EmbeddingResponse = resp.body_mut().read_json().map_err(|e| gateway_err(e.to_string()))?;
        Ok(body.data.into_iter().map(|d| d.embedding).collect())
    }
}
