//! Access to completion and step-scoring backends.
//!
//! Real backends speak the OpenAI-compatible chat-completions protocol (and a
//! small JSON contract for step scoring); scripted mocks replay responses
//! from a JSON file for offline runs.

mod http;
mod limit;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpCompletionClient, HttpScorerClient};
pub use limit::{InFlightLimit, Limited, Permit};
pub use mock::{Exhaustion, MockBackend, MockScorer, MockScript, ScoreRule, ScorerScript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
}

impl DecodingParams {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: None,
            top_p: None,
        }
    }

    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            ..Self::greedy()
        }
    }
}

/// One completion call. `key` is the question id, used by mocks for lookup.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub key: &'a str,
    pub prompt: &'a str,
    pub params: &'a DecodingParams,
}

pub trait CompletionBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError>;
}

/// Per-step scores in `[0, 1]` for a reasoning trace.
pub trait StepScorer: Send + Sync {
    fn score_steps(
        &self,
        key: &str,
        question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<T: StepScorer + ?Sized> StepScorer for &T {
    fn score_steps(
        &self,
        key: &str,
        question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError> {
        (**self).score_steps(key, question, steps)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<T: StepScorer + ?Sized> StepScorer for Box<T> {
    fn score_steps(
        &self,
        key: &str,
        question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError> {
        (**self).score_steps(key, question, steps)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid scores: {0}")]
    InvalidScores(String),
    #[error("mock script: {0}")]
    Script(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Check a scorer response against the request: same length, all in [0, 1].
pub fn validate_scores(steps: usize, scores: &[f64]) -> Result<(), GatewayError> {
    if scores.len() != steps {
        return Err(GatewayError::Malformed(format!(
            "expected {steps} scores, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(GatewayError::InvalidScores(format!(
            "score {bad} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Bounded retries with exponential backoff: `base * 2^(k-1)`, capped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u32::MAX);
        self.backoff_base
            .checked_mul(factor)
            .unwrap_or(self.backoff_max)
            .min(self.backoff_max)
    }
}

/// Connection settings for one remote backend. Credentials come only from
/// the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

fn default_timeout_secs() -> f64 {
    600.0
}
fn default_in_flight() -> usize {
    8
}
fn default_attempts() -> u32 {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_in_flight(),
            max_attempts: default_attempts(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight < 1 {
            return Err(GatewayError::Config("max_in_flight must be >= 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config("timeout_secs must be > 0".into()));
        }
        if self.max_attempts < 1 {
            return Err(GatewayError::Config("max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            backoff_base: Duration::from_millis(self.backoff_base_ms),
            ..RetryPolicy::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
    }
}
