use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{validate_scores, CompletionBackend, CompletionRequest, GatewayError, StepScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaustion {
    #[default]
    RepeatLast,
    Error,
}

/// Scripted responses keyed by question id (or literal prompt text).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub on_exhausted: Exhaustion,
    /// Artificial per-call delay, for exercising concurrency and interruption.
    #[serde(default)]
    pub latency_ms: u64,
    pub responses: BTreeMap<String, Vec<String>>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))
    }
}

/// Deterministic playback backend. Successive calls for one key consume its
/// response list in order.
#[derive(Debug)]
pub struct MockBackend {
    model_id: String,
    script: MockScript,
    cursors: Mutex<HashMap<String, usize>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>, script: MockScript) -> Self {
        Self {
            model_id: model_id.into(),
            script,
            cursors: Mutex::new(HashMap::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_file(model_id: impl Into<String>, path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(model_id, MockScript::from_file(path)?))
    }

    /// Build a script from `(key, responses)` pairs.
    pub fn scripted<K, R>(model_id: &str, entries: impl IntoIterator<Item = (K, Vec<R>)>) -> Self
    where
        K: Into<String>,
        R: Into<String>,
    {
        let responses = entries
            .into_iter()
            .map(|(k, v)| (k.into(), v.into_iter().map(Into::into).collect()))
            .collect();
        Self::new(
            model_id,
            MockScript {
                responses,
                ..MockScript::default()
            },
        )
    }

    pub fn with_exhaustion(mut self, mode: Exhaustion) -> Self {
        self.script.on_exhausted = mode;
        self
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.script.latency_ms = latency.as_millis() as u64;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn next_response(&self, key: &str, prompt: &str) -> Result<String, GatewayError> {
        let (lookup, list) = match self.script.responses.get_key_value(key) {
            Some(kv) => kv,
            None => self.script.responses.get_key_value(prompt).ok_or_else(|| {
                GatewayError::Script(format!("no scripted response for key '{key}'"))
            })?,
        };
        if list.is_empty() {
            return Err(GatewayError::Script(format!(
                "empty response list for '{lookup}'"
            )));
        }
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(lookup.clone()).or_insert(0);
        let idx = *cursor;
        *cursor += 1;
        match list.get(idx) {
            Some(r) => Ok(r.clone()),
            None => match self.script.on_exhausted {
                Exhaustion::RepeatLast => Ok(list.last().unwrap().clone()),
                Exhaustion::Error => Err(GatewayError::Script(format!(
                    "responses for '{lookup}' exhausted after {} call(s)",
                    list.len()
                ))),
            },
        }
    }
}

impl CompletionBackend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if self.script.latency_ms > 0 {
            thread::sleep(Duration::from_millis(self.script.latency_ms));
        }
        let result = self.next_response(request.key, request.prompt);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    pub contains: String,
    pub score: f64,
}

/// Step scores from keyword rules (first match wins), with optional
/// per-question vectors that take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerScript {
    #[serde(default)]
    pub rules: Vec<ScoreRule>,
    #[serde(default)]
    pub default: Option<f64>,
    #[serde(default)]
    pub by_question: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct MockScorer {
    script: ScorerScript,
    calls: AtomicUsize,
}

impl MockScorer {
    pub fn new(script: ScorerScript) -> Self {
        Self {
            script,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn constant(score: f64) -> Self {
        Self::new(ScorerScript {
            default: Some(score),
            ..ScorerScript::default()
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        let script = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        Ok(Self::new(script))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl StepScorer for MockScorer {
    fn score_steps(
        &self,
        key: &str,
        _question: &str,
        steps: &[String],
    ) -> Result<Vec<f64>, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let scores = match self.script.by_question.get(key) {
            Some(v) => v.clone(),
            None => steps
                .iter()
                .map(|step| {
                    self.script
                        .rules
                        .iter()
                        .find(|r| step.contains(&r.contains))
                        .map(|r| r.score)
                        .or(self.script.default)
                        .ok_or_else(|| {
                            GatewayError::Script(format!(
                                "no scoring rule matches a step of '{key}'"
                            ))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        validate_scores(steps.len(), &scores)?;
        Ok(scores)
    }
}
