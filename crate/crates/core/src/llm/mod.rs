//! Chat-completion backends.
//!
//! Every backend implements [`Backend`]. [`LiveBackend`] talks HTTP,
//! [`MockBackend`] is a deterministic rule table over the patient
//! description, and [`CachedBackend`] wraps either with a digest-keyed
//! record/replay store.

mod cache;
mod live;
mod mock;

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{with_cache, CacheEntry, CacheMode, CachedBackend};
pub use live::{LiveBackend, LiveConfig, RetryPolicy};
pub use mock::{mock_diagnose, DescriptionSummary, MockBackend, MockRules};

pub const DEFAULT_IN_FLIGHT: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body_excerpt}")]
    Http { status: u16, body_excerpt: String },
    #[error("cache miss for request {digest}")]
    CacheMiss { digest: String },
    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("mock backend cannot read the description: {0}")]
    UnparseableDescription(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("malformed response: {0}")]
    Response(String),
}

impl LlmError {
    /// Short machine-friendly name used by the CLI error line.
    pub fn class(&self) -> &'static str {
        match self {
            LlmError::Transport { .. } => "transport",
            LlmError::Http { .. } => "http-status",
            LlmError::CacheMiss { .. } => "cache-miss",
            LlmError::Cache { .. } => "cache-io",
            LlmError::UnparseableDescription(_) => "mock-input",
            LlmError::InvalidRequest(_) => "invalid-request",
            LlmError::Config(_) => "backend-config",
            LlmError::Response(_) => "malformed-response",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: &str) -> Self {
        Message { role: Role::System, content: content.to_string() }
    }

    pub fn user(content: &str) -> Self {
        Message { role: Role::User, content: content.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub greedy: bool,
}

impl CompletionRequest {
    pub fn new(model_id: &str, messages: Vec<Message>) -> Self {
        CompletionRequest { model_id: model_id.to_string(), messages, temperature: 0.7, max_tokens: 2000, greedy: true }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("messages must not be empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// Compact JSON with sorted keys. Key order and insignificant
    /// whitespace of the source never reach the digest.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("request is serializable");
        serde_json::to_string(&value).expect("value is serializable")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Content of the last user message.
    pub fn last_user(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
    pub request_digest: String,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError>;

    /// Upper bound on concurrent `complete` calls worth issuing.
    fn max_in_flight(&self) -> usize {
        DEFAULT_IN_FLIGHT
    }

    /// Number of network requests this backend (and anything it wraps) has sent.
    fn network_calls(&self) -> usize {
        0
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn network_calls(&self) -> usize {
        (**self).network_calls()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }

    fn network_calls(&self) -> usize {
        (**self).network_calls()
    }
}

/// Counting semaphore bounding in-flight requests.
pub(crate) struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct SlotGuard<'a>(&'a Slots);

impl Slots {
    pub(crate) fn new(n: usize) -> Self {
        Slots { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    pub(crate) fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}
