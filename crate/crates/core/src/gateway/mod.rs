//! Chat-completion client: retries, per-endpoint rate limiting, bounded
//! concurrency and timing capture, over a pluggable [`Backend`].

mod clock;
mod http;
mod mock;
mod timing;

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

use crate::error::{Error, Result};

pub use clock::{Clock, SystemClock, VirtualClock};
pub use http::{HttpBackend, HttpEmbedder, SYSTEM_MESSAGE};
pub use mock::{MockBackend, MockFallback};
pub use timing::{
    dedupe_timing_logs, format_hours_minutes, ms_to_hours, sum_runtime, Stage, TimingEntry, TimingLog, TimingSink,
};

pub const DEFAULT_MAX_RESPONSE_WORDS: u32 = 400;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    /// Display name, unique within a run (e.g. "Llama 3 70B").
    pub name: String,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_words")]
    pub max_response_words: u32,
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default)]
    pub rate_limit_per_min: Option<u32>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    /// Hardware profile name, for local endpoints whose energy we account.
    #[serde(default)]
    pub hardware: Option<String>,
}

fn default_max_words() -> u32 {
    DEFAULT_MAX_RESPONSE_WORDS
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl ModelEndpoint {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: String::new(),
            model_id: String::new(),
            temperature: 0.0,
            max_response_words: DEFAULT_MAX_RESPONSE_WORDS,
            api_key_env: String::new(),
            rate_limit_per_min: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            max_tokens: None,
            hardware: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("endpoint name must not be empty".into()));
        }
        if self.temperature != 0.0 {
            return Err(Error::Config(format!(
                "endpoint `{}`: temperature must be 0, got {}",
                self.name, self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(format!(
                "endpoint `{}`: max_in_flight must be positive",
                self.name
            )));
        }
        if self.rate_limit_per_min == Some(0) {
            return Err(Error::Config(format!(
                "endpoint `{}`: rate_limit_per_min must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

/// Metadata attached to a prompt; only `prompt` and the endpoint name feed
/// the request id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub prompt: String,
    pub request_id: String,
    pub doc_id: String,
    pub stage: Stage,
}

impl ChatRequest {
    pub fn new(endpoint: &ModelEndpoint, prompt: impl Into<String>, doc_id: impl Into<String>, stage: Stage) -> Self {
        let prompt = prompt.into();
        Self {
            request_id: request_id(&endpoint.name, &prompt),
            prompt,
            doc_id: doc_id.into(),
            stage,
        }
    }
}

/// Hex SHA-256 of `endpoint name`, a newline and the prompt, truncated to 32 chars.
pub fn request_id(endpoint_name: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(endpoint_name.as_bytes());
    h.update(b"\n");
    h.update(prompt.as_bytes());
    h.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub duration_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendErrorKind {
    /// 401/403: the endpoint is unusable for the rest of the run.
    Auth,
    /// 429, optionally with the server's requested wait.
    RateLimited(Option<Duration>),
    /// Timeouts, connection failures, 5xx.
    Transient,
    /// Any other rejection; retrying will not help.
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

pub trait Backend: Send + Sync {
    fn send(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> std::result::Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 2_000,
            max_backoff_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Wait before attempt `attempt + 1`, for `attempt >= 1`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureKind {
    Auth,
    Exhausted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("endpoint `{endpoint}` failed after {attempts} attempt(s): {message}")]
pub struct GatewayError {
    pub endpoint: String,
    pub kind: FailureKind,
    pub attempts: u32,
    pub message: String,
}

impl From<GatewayError> for Error {
    fn from(e: GatewayError) -> Self {
        Error::Gateway {
            endpoint: e.endpoint.clone(),
            message: e.to_string(),
        }
    }
}

const RATE_WINDOW: Duration = Duration::from_secs(60);

#[derive(Default)]
struct EndpointState {
    dispatches: Mutex<VecDeque<Duration>>,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    auth_failure: Mutex<Option<String>>,
}

struct InFlightGuard<'a>(&'a EndpointState);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("in-flight lock poisoned");
        *n -= 1;
        self.0.slot_freed.notify_one();
    }
}

/// Shareable across worker threads.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    states: Mutex<HashMap<String, Arc<EndpointState>>>,
    timing: TimingSink,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, clock: Arc<dyn Clock>, retry: RetryPolicy) -> Self {
        Self {
            backend,
            clock,
            retry,
            states: Mutex::new(HashMap::new()),
            timing: TimingSink::default(),
        }
    }

    pub fn timing(&self) -> &TimingSink {
        &self.timing
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn state(&self, endpoint: &str) -> Arc<EndpointState> {
        self.states
            .lock()
            .expect("gateway state poisoned")
            .entry(endpoint.to_string())
            .or_default()
            .clone()
    }

    /// Block until the sliding one-minute window has room, then record the
    /// dispatch.
    fn admit(&self, endpoint: &ModelEndpoint, state: &EndpointState) {
        let Some(limit) = endpoint.rate_limit_per_min else {
            return;
        };
        loop {
            let wait = {
                let mut window = state.dispatches.lock().expect("rate window poisoned");
                let now = self.clock.elapsed();
                while window.front().is_some_and(|t| now.saturating_sub(*t) >= RATE_WINDOW) {
                    window.pop_front();
                }
                if window.len() < limit as usize {
                    window.push_back(now);
                    return;
                }
                (window[0] + RATE_WINDOW).saturating_sub(now)
            };
            self.clock.sleep(wait.max(Duration::from_millis(1)));
        }
    }

    fn acquire_slot<'a>(&self, endpoint: &ModelEndpoint, state: &'a EndpointState) -> InFlightGuard<'a> {
        let mut n = state.in_flight.lock().expect("in-flight lock poisoned");
        while *n >= endpoint.max_in_flight {
            n = state.slot_freed.wait(n).expect("in-flight lock poisoned");
        }
        *n += 1;
        InFlightGuard(state)
    }

    /// Send `request`, retrying transient failures, and log its duration.
    pub fn complete(
        &self,
        endpoint: &ModelEndpoint,
        request: &ChatRequest,
    ) -> std::result::Result<ChatResponse, GatewayError> {
        let state = self.state(&endpoint.name);
        if let Some(msg) = state.auth_failure.lock().expect("auth flag poisoned").clone() {
            return Err(GatewayError {
                endpoint: endpoint.name.clone(),
                kind: FailureKind::Auth,
                attempts: 0,
                message: msg,
            });
        }

        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _slot = self.acquire_slot(endpoint, &state);
                self.admit(endpoint, &state);
                self.backend.send(endpoint, request)
            };
            let err = match outcome {
                Ok(reply) => {
                    let duration_ms = reply.elapsed.as_millis() as u64;
                    self.timing.record(TimingEntry {
                        unique_id: request.request_id.clone(),
                        doi: request.doc_id.clone(),
                        endpoint: endpoint.name.clone(),
                        stage: request.stage,
                        duration_ms,
                        timestamp: self.clock.wall(),
                    });
                    return Ok(ChatResponse {
                        text: reply.text,
                        duration_ms,
                        attempt_count: attempt,
                    });
                }
                Err(e) => e,
            };
            let fail = |kind| GatewayError {
                endpoint: endpoint.name.clone(),
                kind,
                attempts: attempt,
                message: err.message.clone(),
            };
            let wait = match &err.kind {
                BackendErrorKind::Auth => {
                    warn!(endpoint = %endpoint.name, "authentication failed; endpoint disabled");
                    *state.auth_failure.lock().expect("auth flag poisoned") = Some(err.message.clone());
                    return Err(fail(FailureKind::Auth));
                }
                BackendErrorKind::Permanent => return Err(fail(FailureKind::Rejected)),
                BackendErrorKind::RateLimited(after) => {
                    let b = self.retry.backoff(attempt);
                    after.map_or(b, |a| a.max(b))
                }
                BackendErrorKind::Transient => self.retry.backoff(attempt),
            };
            if attempt >= self.retry.max_attempts {
                return Err(fail(FailureKind::Exhausted));
            }
            debug!(endpoint = %endpoint.name, attempt, ?wait, error = %err, "retrying");
            self.clock.sleep(wait);
        }
    }
}
