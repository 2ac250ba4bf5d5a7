use std::io;
use std::thread;

use serde::Deserialize;
use serde_json::{json, Value};

use super::limit::InFlightLimit;
use super::{
    validate_scores, BackendConfig, CompletionBackend, CompletionRequest, GatewayError,
    RetryPolicy, StepScorer,
};

/// Shared POST-with-retry transport.
struct Transport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    limit: InFlightLimit,
}

enum Failure {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

impl Transport {
    fn new(config: &BackendConfig, path: &str) -> Result<Self, GatewayError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}{}", config.endpoint.trim_end_matches('/'), path),
            api_key: config.api_key(),
            retry: config.retry_policy(),
            limit: InFlightLimit::new(config.max_in_flight),
        })
    }

    fn post(&self, body: &Value) -> Result<Value, GatewayError> {
        let _permit = self.limit.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.post_once(body, attempt) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => e,
            };
            if attempt >= self.retry.max_attempts {
                return Err(err);
            }
            let delay = self.retry.delay(attempt);
            log::warn!("{}: {err}; retrying in {delay:?}", self.url);
            thread::sleep(delay);
        }
    }

    fn post_once(&self, body: &Value, attempts: u32) -> Result<Value, Failure> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(classify(e, attempts)),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| classify(e, attempts))?;
        if status == 429 || status >= 500 {
            return Err(Failure::Retryable(GatewayError::Http {
                status,
                attempts,
                body: truncate(&text),
            }));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(GatewayError::Http {
                status,
                attempts,
                body: truncate(&text),
            }));
        }
        serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(GatewayError::Malformed(format!("invalid JSON body: {e}"))))
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

fn classify(e: ureq::Error, attempts: u32) -> Failure {
    match e {
        ureq::Error::Timeout(_) => Failure::Retryable(GatewayError::Timeout { attempts }),
        ureq::Error::Io(io)
            if matches!(
                io.kind(),
                io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock
            ) =>
        {
            Failure::Retryable(GatewayError::Timeout { attempts })
        }
        ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::Protocol(_) => Failure::Retryable(GatewayError::Transport {
            attempts,
            message: e.to_string(),
        }),
        other => Failure::Fatal(GatewayError::Transport {
            attempts,
            message: other.to_string(),
        }),
    }
}

/// Client for `POST {endpoint}/v1/chat/completions`.
pub struct HttpCompletionClient {
    model: String,
    transport: Transport,
}

impl HttpCompletionClient {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(Self {
            model: config.model.clone(),
            transport: Transport::new(config, "/v1/chat/completions")?,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl CompletionBackend for HttpCompletionClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
        });
        if let Some(m) = request.params.max_tokens {
            body["max_tokens"] = json!(m);
        }
        if let Some(p) = request.params.top_p {
            body["top_p"] = json!(p);
        }
        let value = self.transport.post(&body)?;
        let parsed: ChatResponse = serde_json::from_value(value)
            .map_err(|e| GatewayError::Malformed(format!("unexpected completion shape: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::Malformed("no choices[0].message.content".into()))
    }
}

/// Client for `POST {endpoint}/score`: `{"question","steps"}` -> `{"scores"}`.
pub struct HttpScorerClient {
    transport: Transport,
}

impl HttpScorerClient {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(Self {
            transport: Transport::new(config, "/score")?,
        })
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl StepScorer for HttpScorerClient {
    fn score_steps(
        &self,
        _key: &str,
        question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError> {
        let body = json!({"question": question, "steps": steps});
        let value = self.transport.post(&body)?;
        let parsed: ScoreResponse = serde_json::from_value(value)
            .map_err(|e| GatewayError::Malformed(format!("unexpected score shape: {e}")))?;
        validate_scores(steps.len(), &parsed.scores)?;
        Ok(parsed.scores)
    }
}
