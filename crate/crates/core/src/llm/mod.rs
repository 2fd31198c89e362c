//! Completion backends: an OpenAI-compatible HTTP client and deterministic
//! offline mocks.

mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::map_ordered;
use crate::prompting::WireMessage;

pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV, DEFAULT_ENDPOINT};
pub use mock::{load_fixtures, CopyBestDemo, EchoSource, FixtureEntry, Playback};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16, attempts: u32 },
    #[error("rate limited; gave up after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("request rejected with HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no recorded completion for prompt hash {0}")]
    FixtureMiss(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("prompt has no user message")]
    NoUserMessage,
}

impl LlmError {
    pub fn kind(&self) -> &'static str {
        match self {
            LlmError::Auth { .. } => "auth",
            LlmError::RateLimited { .. } => "rate_limited",
            LlmError::Server { .. } => "server",
            LlmError::Http { .. } => "http",
            LlmError::Timeout { .. } => "timeout",
            LlmError::Transport { .. } => "transport",
            LlmError::MalformedResponse(_) => "malformed_response",
            LlmError::FixtureMiss(_) => "fixture_miss",
            LlmError::MissingApiKey(_) => "missing_api_key",
            LlmError::NoUserMessage => "no_user_message",
        }
    }

    /// Errors that make further requests to the same backend pointless.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::Auth { .. } | LlmError::RateLimited { .. } | LlmError::MissingApiKey(_)
        )
    }

    pub fn attempts(&self) -> u32 {
        match *self {
            LlmError::Auth { attempts, .. }
            | LlmError::RateLimited { attempts }
            | LlmError::Server { attempts, .. }
            | LlmError::Timeout { attempts }
            | LlmError::Transport { attempts, .. } => attempts,
            _ => 1,
        }
    }
}

pub const DEFAULT_TEMPERATURE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            model: "gpt-3.5-turbo-0301".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature >= 0.0 && self.temperature.is_finite() {
            Ok(())
        } else {
            Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResult {
    /// Assistant content only.
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
    pub attempt_count: u32,
}

pub trait Backend: Send + Sync {
    /// Stable identifier recorded in every translation record.
    fn id(&self) -> String;

    fn complete(
        &self,
        messages: &[WireMessage],
        params: &ModelParams,
    ) -> Result<CompletionResult, LlmError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        params: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        (**self).complete(messages, params)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(
        &self,
        messages: &[WireMessage],
        params: &ModelParams,
    ) -> Result<CompletionResult, LlmError> {
        (**self).complete(messages, params)
    }
}

/// SHA-256 over the canonical JSON encoding of the wire messages.
pub fn prompt_hash(messages: &[WireMessage]) -> String {
    let json = serde_json::to_vec(messages).expect("wire messages serialize");
    hex::encode(Sha256::digest(&json))
}

/// Completes many prompts with at most `max_in_flight` concurrent requests.
/// Results are returned in request order.
pub fn complete_batch(
    backend: &dyn Backend,
    requests: &[Vec<WireMessage>],
    params: &ModelParams,
    max_in_flight: usize,
) -> Vec<Result<CompletionResult, LlmError>> {
    map_ordered(requests, max_in_flight, |_, msgs| {
        backend.complete(msgs, params)
    })
}

pub(crate) fn elapsed_ms(d: Duration) -> u64 {
    d.as_millis().min(u64::MAX as u128) as u64
}
