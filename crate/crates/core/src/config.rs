//! TOML run configuration. Every section is optional; relative paths are
//! resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::adaptive_db::{GradeOptions, DEFAULT_MAX_QUARANTINE_FRACTION, DEFAULT_WORKERS};
use crate::cot::{GenerateOptions, DEFAULT_TEACHER_TEMPERATURE};
use crate::domain::{CurriculumSpec, GradingMethod};
use crate::gateway::{BackendConfig, DecodingParams};
use crate::grader::{Grader, LevelBuckets, DEFAULT_MIN_STEP_CHARS};
use crate::sampler::Shortfall;
use crate::verifier::{default_languages, ExecutionLimits, Judge, LanguageSpec, Verifier};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewaySection,
    pub limits: LimitsSection,
    pub judge: JudgeSection,
    pub grader: GraderSection,
    pub sampler: SamplerSection,
    pub generator: GeneratorSection,
    pub distribution: DistributionSection,
    pub pipeline: PipelineSection,
    pub mock: MockSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub base: Option<BackendConfig>,
    pub teacher: Option<BackendConfig>,
    pub scorer: Option<BackendConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub wall_time_ms: u64,
    pub memory_mb: u64,
    pub output_kb: u64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        let d = ExecutionLimits::default();
        Self {
            wall_time_ms: d.wall_time.as_millis() as u64,
            memory_mb: d.memory_bytes >> 20,
            output_kb: d.output_bytes >> 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub workers: usize,
    pub default_language: String,
    pub exact_output: bool,
    pub compile_timeout_secs: f64,
    /// Added to (or replacing) the built-in python, cpp and bash runners.
    pub languages: BTreeMap<String, LanguageSpec>,
}

impl Default for JudgeSection {
    fn default() -> Self {
        let j = Judge::default();
        Self {
            workers: j.workers,
            default_language: j.default_language,
            exact_output: j.exact_output,
            compile_timeout_secs: j.compile_timeout.as_secs_f64(),
            languages: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraderSection {
    pub method: GradingMethod,
    pub min_step_chars: usize,
    pub workers: usize,
    pub max_quarantine_fraction: f64,
    pub probe_temperature: f64,
    pub probe_samples: u32,
    pub probe_max_tokens: Option<u32>,
}

impl Default for GraderSection {
    fn default() -> Self {
        Self {
            method: GradingMethod::Prm,
            min_step_chars: DEFAULT_MIN_STEP_CHARS,
            workers: DEFAULT_WORKERS,
            max_quarantine_fraction: DEFAULT_MAX_QUARANTINE_FRACTION,
            probe_temperature: 0.0,
            probe_samples: 1,
            probe_max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub n: usize,
    pub seed: u64,
    pub shortfall: Shortfall,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            n: 2000,
            seed: 17,
            shortfall: Shortfall::Redistribute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub attempts: u32,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub workers: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            attempts: 1,
            temperature: DEFAULT_TEACHER_TEMPERATURE,
            max_tokens: None,
            workers: DEFAULT_WORKERS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionMode {
    /// Label frequencies of a graded evaluation set.
    #[default]
    Eval,
    Curriculum,
    /// A `distribution.json` from elsewhere.
    External,
}

impl std::str::FromStr for DistributionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eval" => Ok(Self::Eval),
            "curriculum" => Ok(Self::Curriculum),
            "external" => Ok(Self::External),
            other => Err(format!(
                "unknown distribution mode '{other}' (expected eval, curriculum or external)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistributionSection {
    pub mode: DistributionMode,
    pub weights: Option<[f64; 5]>,
    pub easy_weight: f64,
    /// Evaluation questions graded against the base model in `eval` mode.
    pub eval_questions: Vec<PathBuf>,
    /// Source file in `external` mode.
    pub path: Option<PathBuf>,
}

impl DistributionSection {
    pub fn curriculum(&self) -> Option<CurriculumSpec> {
        self.weights.map(|weights| CurriculumSpec {
            weights,
            easy_weight: self.easy_weight,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub questions: Vec<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            questions: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Script files used by `--mock`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    pub base: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    /// Model ids reported by the mocks.
    pub base_model: Option<String>,
    pub teacher_model: Option<String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.pipeline.questions.iter_mut().for_each(fix);
        fix(&mut self.pipeline.out_dir);
        self.distribution.eval_questions.iter_mut().for_each(fix);
        for p in [
            &mut self.distribution.path,
            &mut self.mock.base,
            &mut self.mock.teacher,
            &mut self.mock.scorer,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.limits.wall_time_ms == 0 || self.limits.memory_mb == 0 || self.limits.output_kb == 0
        {
            return bad("limits must all be positive");
        }
        if !(0.0..=1.0).contains(&self.grader.max_quarantine_fraction) {
            return bad("grader.max_quarantine_fraction must be in [0, 1]");
        }
        if self.grader.probe_samples == 0 {
            return bad("grader.probe_samples must be >= 1");
        }
        if self.generator.attempts == 0 {
            return bad("generator.attempts must be >= 1");
        }
        if !(self.judge.compile_timeout_secs > 0.0) {
            return bad("judge.compile_timeout_secs must be > 0");
        }
        for b in [
            &self.gateway.base,
            &self.gateway.teacher,
            &self.gateway.scorer,
        ]
        .into_iter()
        .flatten()
        {
            b.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn limits(&self) -> ExecutionLimits {
        ExecutionLimits {
            wall_time: Duration::from_millis(self.limits.wall_time_ms),
            memory_bytes: self.limits.memory_mb << 20,
            output_bytes: self.limits.output_kb << 10,
        }
    }

    pub fn judge(&self) -> Judge {
        let mut languages = default_languages();
        languages.extend(self.judge.languages.clone());
        Judge {
            languages,
            default_language: self.judge.default_language.clone(),
            workers: self.judge.workers.max(1),
            exact_output: self.judge.exact_output,
            compile_timeout: Duration::from_secs_f64(self.judge.compile_timeout_secs),
        }
    }

    pub fn verifier(&self) -> Verifier {
        Verifier::new(self.judge(), self.limits())
    }

    pub fn grader(&self) -> Grader {
        Grader {
            method: self.grader.method,
            buckets: LevelBuckets::default(),
            min_step_chars: self.grader.min_step_chars,
        }
    }

    pub fn grade_options(&self) -> GradeOptions {
        GradeOptions {
            workers: self.grader.workers.max(1),
            probe: DecodingParams {
                temperature: self.grader.probe_temperature,
                max_tokens: self.grader.probe_max_tokens,
                top_p: None,
            },
            samples: self.grader.probe_samples,
            max_quarantine_fraction: self.grader.max_quarantine_fraction,
            journal: None,
        }
    }

    pub fn generate_options(&self) -> GenerateOptions {
        GenerateOptions {
            attempts: self.generator.attempts,
            params: DecodingParams {
                temperature: self.generator.temperature,
                max_tokens: self.generator.max_tokens,
                top_p: None,
            },
            workers: self.generator.workers.max(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.limits(), ExecutionLimits::default());
        assert_eq!(c.sampler.seed, 17);
        assert_eq!(c.generator.temperature, 0.6);
        assert_eq!(c.grade_options().probe.temperature, 0.0);
    }

    #[test]
    fn sections_parse() {
        let c = Config::parse(
            r#"
            [gateway.base]
            endpoint = "http://localhost:8000"
            model = "small"
            api_key_env = "BASE_KEY"

            [grader]
            method = "ut"
            workers = 2

            [sampler]
            n = 50
            shortfall = "truncate"

            [distribution]
            mode = "curriculum"
            weights = [5, 4, 3, 2, 1]

            [judge.languages.ruby]
            source_file = "main.rb"
            run = ["ruby", "{src}"]
            "#,
        )
        .unwrap();
        assert_eq!(c.gateway.base.as_ref().unwrap().model, "small");
        assert_eq!(c.grader.method, GradingMethod::Ut);
        assert_eq!(c.sampler.shortfall, Shortfall::Truncate);
        assert_eq!(
            c.distribution.curriculum().unwrap().weights,
            [5.0, 4.0, 3.0, 2.0, 1.0]
        );
        let judge = c.judge();
        assert!(judge.languages.contains_key("ruby"));
        assert!(judge.languages.contains_key("python"));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Config::parse("[grader]\nmethodd = \"prm\"").is_err());
        assert!(Config::parse("[generator]\nattempts = 0").is_err());
        assert!(Config::parse(
            "[gateway.base]\nendpoint = \"x\"\nmodel = \"m\"\nmax_in_flight = 0"
        )
        .is_err());
    }

    #[test]
    fn paths_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[pipeline]\nquestions = [\"q.jsonl\", \"/abs/q.jsonl\"]\n[mock]\nbase = \"mock/base.json\"\n",
        )
        .unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.pipeline.questions[0], dir.path().join("q.jsonl"));
        assert_eq!(c.pipeline.questions[1], PathBuf::from("/abs/q.jsonl"));
        assert_eq!(c.pipeline.out_dir, dir.path().join("out"));
        assert_eq!(c.mock.base.unwrap(), dir.path().join("mock/base.json"));
    }
}
