//! Local LLM inference: model configuration, the completion transport, and the
//! validate-and-retry loop that turns raw completions into parsed answers or discards.

mod http;
pub mod mock;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use http::HttpCompleter;

use crate::prompt::Prompt;

/// Validation attempts per item before it is discarded.
pub const MAX_ATTEMPTS: u8 = 5;

pub const ENDPOINT_ENV: &str = "ARGMINE_ENDPOINT";
pub const API_KEY_ENV: &str = "ARGMINE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiFlavor {
    /// `POST {endpoint}/api/generate`, answer in `response`.
    #[default]
    Ollama,
    /// `POST {endpoint}/v1/chat/completions`, answer in `choices[0].message.content`.
    OpenAiChat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub endpoint: String,
    pub api: ApiFlavor,
    pub model: String,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    /// Transport failures tolerated per item before it is reported as failed. These do
    /// not consume validation attempts.
    pub transport_retries: u32,
    /// Sent as `Authorization: Bearer ...`; never serialized.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:11434".into(),
            api: ApiFlavor::Ollama,
            model: "llama3.1:8b".into(),
            temperature: 0.0,
            seed: None,
            max_output_tokens: 4096,
            timeout_secs: 300,
            transport_retries: 1,
            api_key: None,
        }
    }
}

impl ModelConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), model: model.into(), ..Self::default() }
    }

    /// Applies `ARGMINE_ENDPOINT` and `ARGMINE_API_KEY` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.trim().is_empty() {
                self.endpoint = endpoint;
            }
        }
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.trim().is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.model.trim().is_empty() {
            return Err("model name is empty".into());
        }
        if self.endpoint.trim().is_empty() {
            return Err("endpoint is empty".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TransportError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("server answered {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed server response: {0}")]
    Protocol(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
}

/// Something that turns a prompt into raw model text.
pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError>;
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        (**self).complete(prompt)
    }
}

impl<C: Completer + ?Sized> Completer for std::sync::Arc<C> {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        (**self).complete(prompt)
    }
}

impl<C: Completer + ?Sized> Completer for Box<C> {
    fn complete(&self, prompt: &Prompt) -> Result<String, TransportError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CompletionOutcome<T> {
    Valid { value: T, attempts: u8 },
    Discarded { last_output: String, last_rejection: String, attempts: u8 },
    TransportFailed { error: TransportError, attempts: u8 },
}

impl<T> CompletionOutcome<T> {
    /// Validation attempts made (transport retries excluded).
    pub fn attempts(&self) -> u8 {
        match self {
            Self::Valid { attempts, .. }
            | Self::Discarded { attempts, .. }
            | Self::TransportFailed { attempts, .. } => *attempts,
        }
    }

    pub fn is_discarded(&self) -> bool {
        matches!(self, Self::Discarded { .. })
    }

    pub fn valid(self) -> Option<T> {
        match self {
            Self::Valid { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> CompletionOutcome<U> {
        match self {
            Self::Valid { value, attempts } => CompletionOutcome::Valid { value: f(value), attempts },
            Self::Discarded { last_output, last_rejection, attempts } => {
                CompletionOutcome::Discarded { last_output, last_rejection, attempts }
            }
            Self::TransportFailed { error, attempts } => CompletionOutcome::TransportFailed { error, attempts },
        }
    }
}

/// Sends `prompt` until `validator` accepts the output, at most [`MAX_ATTEMPTS`] times.
/// The identical prompt is re-sent on every attempt.
pub fn complete_validated<T, E, C>(
    completer: &C,
    prompt: &Prompt,
    validator: impl Fn(&str) -> Result<T, E>,
    transport_retries: u32,
) -> CompletionOutcome<T>
where
    C: Completer + ?Sized,
    E: fmt::Display,
{
    let mut transport_failures = 0;
    let mut attempts = 0u8;
    let mut last = None;
    while attempts < MAX_ATTEMPTS {
        let raw = match completer.complete(prompt) {
            Ok(raw) => raw,
            Err(error) => {
                transport_failures += 1;
                if transport_failures > transport_retries {
                    log::warn!("transport failure after {attempts} attempts: {error}");
                    return CompletionOutcome::TransportFailed { error, attempts };
                }
                continue;
            }
        };
        attempts += 1;
        match validator(&raw) {
            Ok(value) => return CompletionOutcome::Valid { value, attempts },
            Err(rejection) => {
                log::debug!("attempt {attempts}/{MAX_ATTEMPTS} rejected: {rejection}");
                last = Some((raw, rejection.to_string()));
            }
        }
    }
    let (last_output, last_rejection) = last.expect("at least one attempt was validated");
    CompletionOutcome::Discarded { last_output, last_rejection, attempts }
}
