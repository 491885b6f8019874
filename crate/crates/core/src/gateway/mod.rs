//! Uniform access to independent model backends.
//!
//! A [`Gateway`] owns a registry of backends keyed by `backend_id`. Every call
//! goes through a per-backend semaphore bounding in-flight requests to
//! `max_concurrency`, and through a [`RetryPolicy`] that retries only timeouts
//! and transport failures.
//!
//! Three backend kinds ship with the crate: [`HttpBackend`] (JSON
//! chat-completion over HTTP with a configurable field mapping),
//! [`MockBackend`] (ordered substring rules, byte-deterministic) and
//! [`ReplayBackend`] (frozen transcripts keyed by prompt digest). Anything
//! implementing [`Backend`] can be registered with
//! [`Gateway::register_custom`].

mod http;
mod mock;
mod replay;

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, WireFormat};
pub use mock::{mock_backend, MockBackend, MockFailure, MockRule, MockScript};
pub use replay::{ReplayBackend, Transcript, TranscriptEntry};

/// Default sampling temperature for solver and checker calls.
pub const SOLVER_TEMPERATURE: f64 = 0.2;
/// Default sampling temperature for planner, generator and author calls.
pub const AUTHOR_TEMPERATURE: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend `{backend_id}` timed out")]
    Timeout { backend_id: String },
    #[error("transport failure on `{backend_id}`: {message}")]
    Transport { backend_id: String, message: String },
    #[error("provider error {status} from `{backend_id}`: {body}")]
    Provider {
        backend_id: String,
        status: u16,
        body: String,
    },
    #[error("malformed provider response from `{backend_id}`: {message}")]
    Malformed { backend_id: String, message: String },
}

impl GatewayError {
    /// Whether the retry policy may re-issue the request.
    pub fn is_retriable(&self) -> bool {
        match self {
            GatewayError::Timeout { .. } | GatewayError::Transport { .. } => true,
            GatewayError::Provider { status, .. } => *status >= 500,
            _ => false,
        }
    }

    pub fn backend_id(&self) -> Option<&str> {
        match self {
            GatewayError::Timeout { backend_id }
            | GatewayError::Transport { backend_id, .. }
            | GatewayError::Provider { backend_id, .. }
            | GatewayError::Malformed { backend_id, .. } => Some(backend_id),
            GatewayError::UnknownBackend(id) | GatewayError::Duplicate(id) => Some(id),
            _ => None,
        }
    }
}

/// How a backend is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transport {
    Http {
        #[serde(default)]
        wire: WireFormat,
    },
    Mock { script: MockScript },
    Replay { transcript: Transcript },
    /// Implementation supplied through [`Gateway::register_custom`].
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: String,
    pub provider_name: String,
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    pub transport: Transport,
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout() -> f64 {
    120.0
}

impl BackendSpec {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.backend_id.trim().is_empty() {
            return Err(GatewayError::InvalidSpec("empty backend_id".into()));
        }
        if self.max_concurrency == 0 {
            return Err(GatewayError::InvalidSpec(format!(
                "{}: max_concurrency must be >= 1",
                self.backend_id
            )));
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(GatewayError::InvalidSpec(format!(
                "{}: timeout_s must be > 0",
                self.backend_id
            )));
        }
        Ok(())
    }

    pub fn with_id(mut self, backend_id: impl Into<String>) -> Self {
        self.backend_id = backend_id.into();
        self
    }

    pub fn with_provider(mut self, provider: impl Into<String>) -> Self {
        self.provider_name = provider.into();
        self
    }

    pub fn with_concurrency(mut self, max_concurrency: usize) -> Self {
        self.max_concurrency = max_concurrency;
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: AUTHOR_TEMPERATURE,
            max_tokens: 4096,
            seed: None,
        }
    }

    /// Low-temperature request for verification work.
    pub fn solver(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            temperature: SOLVER_TEMPERATURE,
            ..Self::new(system_prompt, user_prompt)
        }
    }

    /// High-temperature request for generative work.
    pub fn author(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self::new(system_prompt, user_prompt)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty user_prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub backend_id: String,
    pub token_count: u64,
    pub latency_ms: u64,
}

/// Raw output of one backend call, before the gateway stamps latency.
#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub token_count: u64,
}

pub trait Backend: Send + Sync {
    fn complete(&self, spec: &BackendSpec, request: &ChatRequest) -> Result<Completion, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff() -> Self {
        Self {
            initial_backoff: Duration::ZERO,
            ..Self::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Counting semaphore bounding in-flight calls to one backend.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self
                .available
                .wait(permits)
                .unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *permits += 1;
        self.0.available.notify_one();
    }
}

struct Registered {
    spec: BackendSpec,
    backend: Arc<dyn Backend>,
    semaphore: Semaphore,
}

/// Registry of model backends, shareable across threads once populated.
pub struct Gateway {
    backends: BTreeMap<String, Registered>,
    retry: RetryPolicy,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self::with_retry(RetryPolicy::default())
    }

    pub fn with_retry(retry: RetryPolicy) -> Self {
        Self {
            backends: BTreeMap::new(),
            retry,
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    /// Registers a backend described entirely by its spec (HTTP, mock or replay).
    pub fn register_backend(&mut self, spec: BackendSpec) -> Result<String, GatewayError> {
        let backend: Arc<dyn Backend> = match &spec.transport {
            Transport::Http { .. } => Arc::new(HttpBackend::new()),
            Transport::Mock { script } => Arc::new(MockBackend::new(script.clone())),
            Transport::Replay { transcript } => Arc::new(ReplayBackend::new(transcript.clone())),
            Transport::Custom => {
                return Err(GatewayError::InvalidSpec(format!(
                    "{}: custom transport needs register_custom",
                    spec.backend_id
                )))
            }
        };
        self.insert(spec, backend)
    }

    /// Registers a caller-supplied implementation under `spec`.
    pub fn register_custom(
        &mut self,
        spec: BackendSpec,
        backend: Arc<dyn Backend>,
    ) -> Result<String, GatewayError> {
        self.insert(spec, backend)
    }

    fn insert(&mut self, spec: BackendSpec, backend: Arc<dyn Backend>) -> Result<String, GatewayError> {
        spec.validate()?;
        if self.backends.contains_key(&spec.backend_id) {
            return Err(GatewayError::Duplicate(spec.backend_id));
        }
        let id = spec.backend_id.clone();
        let semaphore = Semaphore::new(spec.max_concurrency);
        self.backends.insert(
            id.clone(),
            Registered {
                spec,
                backend,
                semaphore,
            },
        );
        Ok(id)
    }

    pub fn spec(&self, backend_id: &str) -> Result<&BackendSpec, GatewayError> {
        self.backends
            .get(backend_id)
            .map(|r| &r.spec)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))
    }

    /// Registered specs in backend_id order.
    pub fn list(&self) -> Vec<&BackendSpec> {
        self.backends.values().map(|r| &r.spec).collect()
    }

    pub fn contains(&self, backend_id: &str) -> bool {
        self.backends.contains_key(backend_id)
    }

    /// Sends `request` to `backend_id`, retrying timeouts and transport errors.
    pub fn complete(&self, backend_id: &str, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let registered = self
            .backends
            .get(backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(backend_id.to_string()))?;
        request.validate()?;
        let attempts = self.retry.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            let started = Instant::now();
            let result = {
                let _permit = registered.semaphore.acquire();
                registered.backend.complete(&registered.spec, request)
            };
            match result {
                Ok(completion) => {
                    return Ok(ChatResponse {
                        text: completion.text,
                        backend_id: backend_id.to_string(),
                        token_count: completion.token_count,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(err) if err.is_retriable() && attempt < attempts => {
                    tracing::debug!(backend_id, attempt, error = %err, "retrying");
                    std::thread::sleep(self.retry.backoff(attempt));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

/// Rough whitespace token count used when a provider reports none.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
