//! Result verification: answer equivalence for math, all-tests-pass for code.

pub mod extract;
pub mod judge;
pub mod math;

pub use extract::{extract_final_answer, locate_final_answer, ExtractionError, Located};
pub use judge::{
    default_languages, CaseOutcome, ExecutionLimits, Judge, JudgeError, LanguageSpec, TestReport,
};
pub use math::{math_equivalent, normalize_math_answer, NormalizedAnswer};

use crate::domain::{ModelTrace, Question, Task, Verdict};

/// Outcome of checking one response against a question.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub verdict: Verdict,
    pub extracted: Option<String>,
    /// Present for code questions whose program was executed.
    pub report: Option<TestReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("code verification unavailable: {0}")]
    Environment(String),
    #[error("question {id} is missing its {what}")]
    MalformedQuestion { id: String, what: &'static str },
    #[error("sandbox failure: {0}")]
    Sandbox(String),
}

#[derive(Debug, Clone, Default)]
pub struct Verifier {
    pub judge: Judge,
    pub limits: ExecutionLimits,
}

impl Verifier {
    pub fn new(judge: Judge, limits: ExecutionLimits) -> Self {
        Self { judge, limits }
    }

    /// Extract the answer from `raw_text` and check it.
    ///
    /// Extraction failures and unrunnable programs yield `Verdict::Error`;
    /// a missing toolchain is an `Err` since it says nothing about the answer.
    pub fn verify(
        &self,
        question: &Question,
        raw_text: &str,
    ) -> Result<Verification, VerifierError> {
        let located = match locate_final_answer(raw_text, question.task) {
            Ok(l) => l,
            Err(_) => {
                return Ok(Verification {
                    verdict: Verdict::Error,
                    extracted: None,
                    report: None,
                })
            }
        };
        match question.task {
            Task::Math => {
                let reference = question.reference_answer.as_deref().ok_or_else(|| {
                    VerifierError::MalformedQuestion {
                        id: question.id.clone(),
                        what: "reference_answer",
                    }
                })?;
                let verdict = if math_equivalent(&located.content, reference) {
                    Verdict::Correct
                } else {
                    Verdict::Incorrect
                };
                Ok(Verification {
                    verdict,
                    extracted: Some(located.content),
                    report: None,
                })
            }
            Task::Code => {
                let suite =
                    question
                        .tests
                        .as_deref()
                        .ok_or_else(|| VerifierError::MalformedQuestion {
                            id: question.id.clone(),
                            what: "tests",
                        })?;
                let run = self.judge.run_code_tests_in(
                    located.lang.as_deref(),
                    &located.content,
                    suite,
                    &self.limits,
                );
                let (verdict, report) = match run {
                    Ok(report) => {
                        let v = if report.all_passed() {
                            Verdict::Correct
                        } else {
                            Verdict::Incorrect
                        };
                        (v, Some(report))
                    }
                    Err(JudgeError::UnknownLanguage(tag)) => {
                        log::debug!("{}: no runner for language '{tag}'", question.id);
                        (Verdict::Error, None)
                    }
                    Err(JudgeError::Environment(msg)) => {
                        return Err(VerifierError::Environment(msg))
                    }
                    Err(e) => return Err(VerifierError::Sandbox(e.to_string())),
                };
                Ok(Verification {
                    verdict,
                    extracted: Some(located.content),
                    report,
                })
            }
        }
    }

    /// Verdict for an existing trace (re-extracts from its raw text).
    pub fn verdict(
        &self,
        trace: &ModelTrace,
        question: &Question,
    ) -> Result<Verdict, VerifierError> {
        Ok(self.verify(question, &trace.raw_text)?.verdict)
    }
}
