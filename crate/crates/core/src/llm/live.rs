use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendKind, Completion, CompletionRequest, LlmError, Slots, DEFAULT_IN_FLIGHT};

const BODY_EXCERPT_CHARS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after every further failure.
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 1000 }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt.saturating_sub(2).min(20)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "CLINREASON_API_KEY".into(),
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_IN_FLIGHT,
            timeout_secs: 120,
        }
    }
}

/// HTTP chat-completions client. The token is read from the environment
/// at construction and never serialized.
pub struct LiveBackend {
    config: LiveConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    slots: Slots,
    sent: AtomicUsize,
}

enum Failure {
    Retry(LlmError),
    Fatal(LlmError),
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let slots = Slots::new(config.max_in_flight);
        Ok(LiveBackend { config, api_key, client, slots, sent: AtomicUsize::new(0) })
    }

    /// Like [`new`](Self::new) but refuses to start without a credential.
    pub fn from_env(config: LiveConfig) -> Result<Self, LlmError> {
        let b = Self::new(config)?;
        if b.api_key.is_none() {
            return Err(LlmError::Config(format!("environment variable {} is not set", b.config.api_key_env)));
        }
        Ok(b)
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    /// `greedy` stays client-side (one sample, never resampled); the
    /// temperature is sent as configured.
    fn wire_body(request: &CompletionRequest) -> Value {
        json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Failure> {
        self.sent.fetch_add(1, Ordering::Relaxed);
        let mut builder = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| Failure::Retry(LlmError::Transport { attempts: 1, message: e.to_string() }))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Failure::Retry(LlmError::Transport { attempts: 1, message: e.to_string() }))?;
        if !status.is_success() {
            let err = LlmError::Http { status: status.as_u16(), body_excerpt: text.chars().take(BODY_EXCERPT_CHARS).collect() };
            return Err(if status.as_u16() == 429 || status.is_server_error() { Failure::Retry(err) } else { Failure::Fatal(err) });
        }
        extract_text(&text).map_err(Failure::Fatal)
    }
}

/// Accepts the common chat shape (`choices[0].message.content`), the
/// legacy completion shape (`choices[0].text`) and a bare `{"text": ..}`.
fn extract_text(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Response(e.to_string()))?;
    let choice = &v["choices"][0];
    let text = [&choice["message"]["content"], &choice["text"], &v["text"]]
        .into_iter()
        .find_map(|x| x.as_str())
        .map(str::to_string);
    text.ok_or_else(|| LlmError::Response("no completion text in response".into()))
}

impl Backend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let body = Self::wire_body(request);
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let attempts = self.config.retry.attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        backend: BackendKind::Live,
                        latency_ms: started.elapsed().as_millis() as u64,
                        request_digest: request.digest(),
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) if attempt >= attempts => {
                    return Err(match e {
                        LlmError::Transport { message, .. } => LlmError::Transport { attempts: attempt, message },
                        other => other,
                    })
                }
                Err(Failure::Retry(_)) => {
                    attempt += 1;
                    std::thread::sleep(self.config.retry.delay_before(attempt));
                }
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }

    fn network_calls(&self) -> usize {
        self.sent.load(Ordering::Relaxed)
    }
}
