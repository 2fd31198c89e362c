use std::env;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{elapsed_ms, Backend, CompletionResult, LlmError, ModelParams};
use crate::prompting::WireMessage;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Exponential backoff for transient failures (429, 5xx, timeouts,
/// connection errors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total tries including the first one.
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 6,
            initial_backoff_ms: 1_000,
            max_backoff_ms: 60_000,
            multiplier: 2.0,
            timeout_ms: 120_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self
            .multiplier
            .max(1.0)
            .powi(retry.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [WireMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Transient(LlmError),
    Permanent(LlmError),
}

pub struct HttpBackend {
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        retry: RetryPolicy,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(retry.timeout_ms)))
            .build();
        HttpBackend {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            retry,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    /// Reads the API key from `key_var`; keys are never taken from files.
    pub fn from_env(
        endpoint: impl Into<String>,
        key_var: &str,
        retry: RetryPolicy,
    ) -> Result<Self, LlmError> {
        let key = env::var(key_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::MissingApiKey(key_var.to_string()))?;
        Ok(Self::new(endpoint, key, retry))
    }

    fn attempt(&self, body: &str, attempts: u32) -> Attempt {
        let sent = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match sent {
            Ok(resp) => resp,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Transient(LlmError::Timeout { attempts })
            }
            Err(e) => {
                return Attempt::Transient(LlmError::Transport {
                    message: e.to_string(),
                    attempts,
                })
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Transient(LlmError::Timeout { attempts })
            }
            Err(e) if status == 200 => {
                return Attempt::Permanent(LlmError::MalformedResponse(e.to_string()))
            }
            Err(_) => String::new(),
        };
        match status {
            200 => match serde_json::from_str::<ChatResponse>(&text) {
                Ok(r) => match r.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(content) => Attempt::Done(content),
                    None => Attempt::Permanent(LlmError::MalformedResponse("no choices".into())),
                },
                Err(e) => Attempt::Permanent(LlmError::MalformedResponse(e.to_string())),
            },
            401 | 403 => Attempt::Permanent(LlmError::Auth { status, attempts }),
            429 => Attempt::Transient(LlmError::RateLimited { attempts }),
            500..=599 => Attempt::Transient(LlmError::Server { status, attempts }),
            _ => Attempt::Permanent(LlmError::Http { status, body: text }),
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        params: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        let body = serde_json::to_string(&ChatRequest {
            model: &params.model,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        })
        .expect("request serializes");
        let start = Instant::now();
        let max = self.retry.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, attempts) {
                Attempt::Done(text) => {
                    return Ok(CompletionResult {
                        text,
                        latency_ms: elapsed_ms(start.elapsed()),
                        backend_id: self.id(),
                        attempt_count: attempts,
                    })
                }
                Attempt::Permanent(e) => return Err(e),
                Attempt::Transient(e) if attempts >= max => return Err(e),
                Attempt::Transient(_) => thread::sleep(self.retry.backoff(attempts)),
            }
        }
    }
}
