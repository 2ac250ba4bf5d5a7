//! Records shared by every pipeline stage.
//!
//! Each type here has a line-delimited JSON form (see [`crate::jsonl`]) and a
//! [`Record::validate`] check that is run whenever a record is decoded or
//! handed across a stage boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance for "probabilities sum to one".
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// A record with a JSONL representation and invariants checked at decode time.
pub trait Record: Serialize + serde::de::DeserializeOwned {
    fn validate(&self) -> Result<(), ValidationError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Math,
    Code,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Math => "math",
            Task::Code => "code",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected_output: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected_output: expected_output.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub task: Task,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<TestCase>>,
    pub source: String,
}

impl Question {
    pub fn math(
        id: impl Into<String>,
        prompt: impl Into<String>,
        reference_answer: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            task: Task::Math,
            prompt: prompt.into(),
            reference_answer: Some(reference_answer.into()),
            tests: None,
            source: String::new(),
        }
    }

    pub fn code(id: impl Into<String>, prompt: impl Into<String>, tests: Vec<TestCase>) -> Self {
        Self {
            id: id.into(),
            task: Task::Code,
            prompt: prompt.into(),
            reference_answer: None,
            tests: Some(tests),
            source: String::new(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

impl Record for Question {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::new("id", "must be nonempty"));
        }
        match self.task {
            Task::Math => {
                if self.reference_answer.is_none() {
                    return Err(ValidationError::new(
                        "reference_answer",
                        "reference_answer required for math questions",
                    ));
                }
                if self.tests.is_some() {
                    return Err(ValidationError::new(
                        "tests",
                        "tests not allowed on math questions",
                    ));
                }
            }
            Task::Code => {
                match &self.tests {
                    Some(tests) if !tests.is_empty() => {}
                    _ => {
                        return Err(ValidationError::new(
                            "tests",
                            "tests required (nonempty) for code questions",
                        ))
                    }
                }
                if self.reference_answer.is_some() {
                    return Err(ValidationError::new(
                        "reference_answer",
                        "reference_answer not allowed on code questions",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Error,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Correct => "correct",
            Verdict::Incorrect => "incorrect",
            Verdict::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTrace {
    pub question_id: String,
    pub model_id: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_answer: Option<String>,
    pub verdict: Verdict,
}

/// Difficulty outcome: `Easy` for solved questions, `L1` (mildest) to `L5`
/// (hardest) for graded ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Easy,
    L1,
    L2,
    L3,
    L4,
    L5,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::Easy,
        Level::L1,
        Level::L2,
        Level::L3,
        Level::L4,
        Level::L5,
    ];
    pub const GRADED: [Level; 5] = [Level::L1, Level::L2, Level::L3, Level::L4, Level::L5];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Easy => "easy",
            Level::L1 => "l1",
            Level::L2 => "l2",
            Level::L3 => "l3",
            Level::L4 => "l4",
            Level::L5 => "l5",
        }
    }

    pub fn is_graded(self) -> bool {
        self != Level::Easy
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradingMethod {
    Prm,
    Ut,
}

impl fmt::Display for GradingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradingMethod::Prm => "prm",
            GradingMethod::Ut => "ut",
        })
    }
}

impl std::str::FromStr for GradingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prm" => Ok(GradingMethod::Prm),
            "ut" => Ok(GradingMethod::Ut),
            other => Err(format!(
                "unknown grading method '{other}' (expected prm or ut)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyLabel {
    pub label: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub grading_method: GradingMethod,
}

impl DifficultyLabel {
    pub fn easy(method: GradingMethod) -> Self {
        Self {
            label: Level::Easy,
            score: None,
            grading_method: method,
        }
    }

    pub fn graded(label: Level, score: f64, method: GradingMethod) -> Self {
        Self {
            label,
            score: Some(score),
            grading_method: method,
        }
    }
}

impl Record for DifficultyLabel {
    fn validate(&self) -> Result<(), ValidationError> {
        match (self.label, self.score) {
            (Level::Easy, None) => Ok(()),
            (Level::Easy, Some(_)) => Err(ValidationError::new(
                "score",
                "easy labels must not carry a score",
            )),
            (_, None) => Err(ValidationError::new(
                "score",
                format!("score required for graded label {}", self.label),
            )),
            (_, Some(s)) if !(0.0..=1.0).contains(&s) => Err(ValidationError::new(
                "score",
                format!("score {s} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

/// One element of the adaptive question database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GradedLine", from = "GradedLine")]
pub struct GradedQuestion {
    pub question: Question,
    pub trace: ModelTrace,
    pub difficulty: DifficultyLabel,
}

/// Flat `graded.jsonl` layout: question fields, then trace and label fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradedLine {
    id: String,
    task: Task,
    prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tests: Option<Vec<TestCase>>,
    source: String,
    model_id: String,
    raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extracted_answer: Option<String>,
    verdict: Verdict,
    label: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    grading_method: GradingMethod,
}

impl From<GradedQuestion> for GradedLine {
    fn from(g: GradedQuestion) -> Self {
        GradedLine {
            id: g.question.id,
            task: g.question.task,
            prompt: g.question.prompt,
            reference_answer: g.question.reference_answer,
            tests: g.question.tests,
            source: g.question.source,
            model_id: g.trace.model_id,
            raw_text: g.trace.raw_text,
            extracted_answer: g.trace.extracted_answer,
            verdict: g.trace.verdict,
            label: g.difficulty.label,
            score: g.difficulty.score,
            grading_method: g.difficulty.grading_method,
        }
    }
}

impl From<GradedLine> for GradedQuestion {
    fn from(l: GradedLine) -> Self {
        GradedQuestion {
            trace: ModelTrace {
                question_id: l.id.clone(),
                model_id: l.model_id,
                raw_text: l.raw_text,
                extracted_answer: l.extracted_answer,
                verdict: l.verdict,
            },
            question: Question {
                id: l.id,
                task: l.task,
                prompt: l.prompt,
                reference_answer: l.reference_answer,
                tests: l.tests,
                source: l.source,
            },
            difficulty: DifficultyLabel {
                label: l.label,
                score: l.score,
                grading_method: l.grading_method,
            },
        }
    }
}

impl GradedQuestion {
    pub fn id(&self) -> &str {
        &self.question.id
    }

    pub fn level(&self) -> Level {
        self.difficulty.label
    }
}

impl Record for GradedQuestion {
    fn validate(&self) -> Result<(), ValidationError> {
        self.question.validate()?;
        self.difficulty.validate()?;
        if self.trace.question_id != self.question.id {
            return Err(ValidationError::new(
                "question_id",
                "trace does not belong to this question",
            ));
        }
        let easy = self.difficulty.label == Level::Easy;
        let correct = self.trace.verdict == Verdict::Correct;
        if easy != correct {
            return Err(ValidationError::new(
                "label",
                format!(
                    "label {} inconsistent with verdict {} (easy iff correct)",
                    self.difficulty.label, self.trace.verdict
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Eval,
    Curriculum,
    External,
}

/// Probability mass over the six difficulty labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DistributionFile", try_from = "DistributionFile")]
pub struct DifficultyDistribution {
    pub kind: DistributionKind,
    pub probs: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistributionFile {
    kind: DistributionKind,
    probs: ProbsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbsFile {
    easy: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    l4: f64,
    l5: f64,
}

impl From<DifficultyDistribution> for DistributionFile {
    fn from(d: DifficultyDistribution) -> Self {
        let [easy, l1, l2, l3, l4, l5] = d.probs;
        DistributionFile {
            kind: d.kind,
            probs: ProbsFile {
                easy,
                l1,
                l2,
                l3,
                l4,
                l5,
            },
        }
    }
}

impl TryFrom<DistributionFile> for DifficultyDistribution {
    type Error = std::convert::Infallible;

    fn try_from(f: DistributionFile) -> Result<Self, Self::Error> {
        let p = f.probs;
        Ok(DifficultyDistribution {
            kind: f.kind,
            probs: [p.easy, p.l1, p.l2, p.l3, p.l4, p.l5],
        })
    }
}

impl DifficultyDistribution {
    pub fn prob(&self, level: Level) -> f64 {
        self.probs[level.index()]
    }
}

impl Record for DifficultyDistribution {
    fn validate(&self) -> Result<(), ValidationError> {
        for level in Level::ALL {
            let p = self.prob(level);
            if !p.is_finite() || p < 0.0 {
                return Err(ValidationError::new(
                    format!("probs.{level}"),
                    format!("negative or non-finite mass {p}"),
                ));
            }
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ValidationError::new(
                "probs",
                format!("distribution not normalized (sum = {sum})"),
            ));
        }
        if self.kind == DistributionKind::Curriculum {
            for pair in Level::GRADED.windows(2) {
                if self.prob(pair[0]) <= self.prob(pair[1]) {
                    return Err(ValidationError::new(
                        format!("probs.{}", pair[1]),
                        format!(
                            "curriculum mass must strictly decrease with difficulty: {} = {} is not above {} = {}",
                            pair[0],
                            self.prob(pair[0]),
                            pair[1],
                            self.prob(pair[1])
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Curriculum weights for the five graded levels, L1 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSpec {
    pub weights: [f64; 5],
    #[serde(default)]
    pub easy_weight: f64,
}

impl CurriculumSpec {
    pub fn new(weights: [f64; 5]) -> Self {
        Self {
            weights,
            easy_weight: 0.0,
        }
    }
}

pub const STRICT_DECREASE_RULE: &str = "weights must strictly decrease: w_i > w_{i+1} for i = 1..4";

impl Record for CurriculumSpec {
    fn validate(&self) -> Result<(), ValidationError> {
        for (i, w) in self.weights.iter().enumerate() {
            if !w.is_finite() || *w <= 0.0 {
                return Err(ValidationError::new(
                    format!("weights[{}]", i + 1),
                    format!("weight {w} must be positive"),
                ));
            }
        }
        for i in 0..4 {
            if self.weights[i] <= self.weights[i + 1] {
                return Err(ValidationError::new(
                    "weights",
                    format!(
                        "{STRICT_DECREASE_RULE} (w_{} = {} <= w_{} = {})",
                        i + 1,
                        self.weights[i],
                        i + 2,
                        self.weights[i + 1]
                    ),
                ));
            }
        }
        if !self.easy_weight.is_finite() || self.easy_weight < 0.0 {
            return Err(ValidationError::new(
                "easy_weight",
                "easy_weight must be >= 0",
            ));
        }
        Ok(())
    }
}

/// A verified teacher reasoning trace, as stored in `cot.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoTRecord {
    pub id: String,
    pub prompt: String,
    pub teacher_model: String,
    pub reasoning: String,
    pub final_answer: String,
    pub verified: bool,
    pub attempt_index: u32,
}

impl Record for CoTRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.attempt_index < 1 {
            return Err(ValidationError::new("attempt_index", "must be >= 1"));
        }
        Ok(())
    }
}

/// Instruction/output pair in `sft.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftRecord {
    pub instruction: String,
    pub output: String,
}

impl SftRecord {
    pub fn from_cot(record: &CoTRecord) -> Self {
        SftRecord {
            instruction: record.prompt.clone(),
            output: format!("<think>{}</think>{}", record.reasoning, record.final_answer),
        }
    }
}

impl Record for SftRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        Ok(())
    }
}
