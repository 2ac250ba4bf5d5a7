use anyhow::{anyhow, Context, Result};

use adacot_core::config::Config;
use adacot_core::gateway::{
    CompletionBackend, GatewayError, HttpCompletionClient, HttpScorerClient, MockBackend,
    MockScorer, StepScorer,
};

const MOCK_BASE: &str = "mock-base";
const MOCK_TEACHER: &str = "mock-teacher";

#[derive(Clone, Copy)]
pub enum Role {
    Base,
    Teacher,
}

/// Completion backend for `role`, optionally under a different model id.
pub fn completion(
    config: &Config,
    mock: bool,
    role: Role,
    model: Option<&str>,
) -> Result<Box<dyn CompletionBackend>> {
    let (name, script, mock_model, remote) = match role {
        Role::Base => (
            "base",
            &config.mock.base,
            &config.mock.base_model,
            &config.gateway.base,
        ),
        Role::Teacher => (
            "teacher",
            &config.mock.teacher,
            &config.mock.teacher_model,
            &config.gateway.teacher,
        ),
    };
    if mock {
        let path = script.as_ref().ok_or_else(|| {
            GatewayError::Config(format!("--mock needs mock.{name} in the config"))
        })?;
        let id = model
            .map(str::to_string)
            .or_else(|| mock_model.clone())
            .unwrap_or_else(|| match role {
                Role::Base => MOCK_BASE.to_string(),
                Role::Teacher => MOCK_TEACHER.to_string(),
            });
        return Ok(Box::new(MockBackend::from_file(id, path)?));
    }
    let mut cfg = remote.clone().ok_or_else(|| {
        GatewayError::Config(format!("no [gateway.{name}] section in the config"))
    })?;
    if let Some(m) = model {
        cfg.model = m.to_string();
    }
    let client = HttpCompletionClient::new(&cfg).with_context(|| format!("{name} backend"))?;
    Ok(Box::new(client))
}

/// Stand-in when no scorer is configured; only fails if actually used.
struct NoScorer;

impl StepScorer for NoScorer {
    fn score_steps(&self, _: &str, _: &str, _: &[String]) -> Result<Vec<f64>, GatewayError> {
        Err(GatewayError::Config("no step scorer configured".into()))
    }
}

pub fn scorer(config: &Config, mock: bool) -> Result<Box<dyn StepScorer>> {
    if mock {
        return match &config.mock.scorer {
            Some(path) => Ok(Box::new(MockScorer::from_file(path)?)),
            None => Ok(Box::new(NoScorer)),
        };
    }
    match &config.gateway.scorer {
        Some(cfg) => Ok(Box::new(
            HttpScorerClient::new(cfg).map_err(|e| anyhow!(e).context("scorer backend"))?,
        )),
        None => Ok(Box::new(NoScorer)),
    }
}
