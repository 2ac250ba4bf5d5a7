//! Difficulty grading of unsolved questions.
//!
//! A correct trace is `Easy`. Anything else is scored, either by the mean
//! per-step process-reward score of the trace or by the fraction of unit
//! tests its program passed, and the score is bucketed into `L1..L5` with
//! lower scores meaning harder questions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::domain::{DifficultyLabel, GradingMethod, Level, ModelTrace, Question, Task, Verdict};
use crate::gateway::{GatewayError, StepScorer};
use crate::verifier::TestReport;

#[derive(Debug, Clone, PartialEq)]
pub struct StepScores {
    pub steps: Vec<String>,
    pub scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum GradeError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("step scorer failed: {0}")]
    Scorer(#[from] GatewayError),
}

pub const DEFAULT_MIN_STEP_CHARS: usize = 10;

static BLANK_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n[ \t\r]*\n").unwrap());

/// Split a trace into steps at blank lines; steps shorter than 10 characters
/// are folded into the preceding step.
pub fn segment_steps(raw_text: &str) -> Vec<String> {
    segment_steps_with(raw_text, DEFAULT_MIN_STEP_CHARS)
}

pub fn segment_steps_with(raw_text: &str, min_chars: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in BLANK_LINE.split(raw_text) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        match out.last_mut() {
            Some(prev) if part.chars().count() < min_chars => {
                prev.push('\n');
                prev.push_str(part);
            }
            _ => out.push(part.to_string()),
        }
    }
    if out.is_empty() {
        out.push(raw_text.trim().to_string());
    }
    out
}

/// Score boundaries: a score `s` lands in L1 when `s >= cuts[3]`, L2 when
/// `s >= cuts[2]`, ..., L5 otherwise. Every bucket is half-open on the high
/// side except L1, which closes at 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBuckets {
    pub cuts: [f64; 4],
}

impl Default for LevelBuckets {
    fn default() -> Self {
        Self {
            cuts: [0.2, 0.4, 0.6, 0.8],
        }
    }
}

impl LevelBuckets {
    pub fn validate(&self) -> Result<(), GradeError> {
        let ok = self.cuts.iter().all(|c| *c > 0.0 && *c < 1.0)
            && self.cuts.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(GradeError::Contract(format!(
                "bucket cuts must be strictly increasing inside (0, 1): {:?}",
                self.cuts
            )))
        }
    }

    pub fn level(&self, score: f64) -> Result<Level, GradeError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(GradeError::Contract(format!(
                "score {score} outside [0, 1]"
            )));
        }
        let [c4, c3, c2, c1] = self.cuts;
        Ok(if score >= c1 {
            Level::L1
        } else if score >= c2 {
            Level::L2
        } else if score >= c3 {
            Level::L3
        } else if score >= c4 {
            Level::L4
        } else {
            Level::L5
        })
    }
}

/// Bucket a score with the default uniform fifths.
pub fn score_to_level(score: f64) -> Result<Level, GradeError> {
    LevelBuckets::default().level(score)
}

/// Level from a unit-test pass rate; all-pass reports belong to `Easy`.
pub fn ut_pass_rate_level(report: &TestReport) -> Result<(Level, f64), GradeError> {
    ut_level_with(report, &LevelBuckets::default())
}

fn ut_level_with(report: &TestReport, buckets: &LevelBuckets) -> Result<(Level, f64), GradeError> {
    if report.total == 0 {
        return Err(GradeError::Contract("empty test report".into()));
    }
    if report.passed >= report.total {
        return Err(GradeError::Contract(
            "all tests passed; the question is Easy and must not be graded".into(),
        ));
    }
    let rate = report.pass_rate();
    Ok((buckets.level(rate)?, rate))
}

pub fn prm_score(
    question: &Question,
    trace: &ModelTrace,
    scorer: &dyn StepScorer,
) -> Result<StepScores, GradeError> {
    prm_score_with(question, trace, scorer, DEFAULT_MIN_STEP_CHARS)
}

fn prm_score_with(
    question: &Question,
    trace: &ModelTrace,
    scorer: &dyn StepScorer,
    min_step_chars: usize,
) -> Result<StepScores, GradeError> {
    if trace.verdict == Verdict::Correct {
        return Err(GradeError::Contract(format!(
            "{}: correct traces are Easy and are not scored",
            question.id
        )));
    }
    let steps = segment_steps_with(&trace.raw_text, min_step_chars);
    let scores = scorer.score_steps(&question.id, &question.prompt, &steps)?;
    crate::gateway::validate_scores(steps.len(), &scores)?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(StepScores {
        steps,
        scores,
        mean: mean.clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grader {
    pub method: GradingMethod,
    pub buckets: LevelBuckets,
    pub min_step_chars: usize,
}

impl Default for Grader {
    fn default() -> Self {
        Self::new(GradingMethod::Prm)
    }
}

impl Grader {
    pub fn new(method: GradingMethod) -> Self {
        Self {
            method,
            buckets: LevelBuckets::default(),
            min_step_chars: DEFAULT_MIN_STEP_CHARS,
        }
    }

    /// Assign a difficulty label to a verified trace.
    ///
    /// `report` is the unit-test report from verification, if the program
    /// ran. UT grading only applies to code questions; math questions are
    /// always PRM-graded and recorded as such.
    pub fn label(
        &self,
        question: &Question,
        trace: &ModelTrace,
        report: Option<&TestReport>,
        scorer: &dyn StepScorer,
    ) -> Result<DifficultyLabel, GradeError> {
        if trace.verdict == Verdict::Correct {
            return Ok(DifficultyLabel::easy(self.method));
        }
        if self.method == GradingMethod::Ut && question.task == Task::Code {
            let (level, rate) = match report {
                Some(r) if r.total > 0 => ut_level_with(r, &self.buckets)?,
                // nothing ran
                _ => (self.buckets.level(0.0)?, 0.0),
            };
            return Ok(DifficultyLabel::graded(level, rate, GradingMethod::Ut));
        }
        let scored = prm_score_with(question, trace, scorer, self.min_step_chars)?;
        let level = self.buckets.level(scored.mean)?;
        Ok(DifficultyLabel::graded(
            level,
            scored.mean,
            GradingMethod::Prm,
        ))
    }
}
