//! Teacher reasoning generation. Only responses the verifier accepts become
//! training records; everything else is kept in a rejects sidecar.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{CoTRecord, Question, Record, SftRecord, Task, ValidationError, Verdict};
use crate::gateway::{CompletionBackend, CompletionRequest, DecodingParams};
use crate::jsonl::{self, JsonlError};
use crate::pool::map_ordered;
use crate::prompts;
use crate::verifier::{locate_final_answer, Verifier};

pub const DEFAULT_TEACHER_TEMPERATURE: f64 = 0.6;

#[derive(Debug, thiserror::Error)]
pub enum CotError {
    #[error("record {id} is not verified; refusing to emit any SFT data")]
    Unverified { id: String },
    #[error("attempts must be at least 1")]
    NoAttempts,
    #[error(transparent)]
    File(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectKind {
    /// Every attempt was verified and none was correct.
    Rejected,
    /// Backend or verifier failure; says nothing about the answer.
    Error,
}

/// One line of `rejects.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RejectRecord {
    pub id: String,
    pub teacher_model: String,
    pub outcome: RejectKind,
    /// Verdict of each completed attempt, in order.
    pub verdicts: Vec<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Record for RejectRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.outcome == RejectKind::Rejected && self.verdicts.is_empty() {
            return Err(ValidationError::new(
                "verdicts",
                "a rejection records at least one verdict",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generation {
    Accepted(CoTRecord),
    Rejected(RejectRecord),
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub attempts: u32,
    pub params: DecodingParams,
    pub workers: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            attempts: 1,
            params: DecodingParams::with_temperature(DEFAULT_TEACHER_TEMPERATURE),
            workers: 8,
        }
    }
}

/// Query the teacher up to `attempts` times; the first verified-correct
/// response wins.
pub fn generate_cot(
    question: &Question,
    teacher: &dyn CompletionBackend,
    verifier: &Verifier,
    attempts: u32,
    params: &DecodingParams,
) -> Result<Generation, CotError> {
    if attempts == 0 {
        return Err(CotError::NoAttempts);
    }
    let prompt = prompts::render(question);
    let mut verdicts = Vec::new();
    let reject = |outcome, verdicts, reason: Option<String>| {
        Generation::Rejected(RejectRecord {
            id: question.id.clone(),
            teacher_model: teacher.model_id().to_string(),
            outcome,
            verdicts,
            reason,
        })
    };
    for attempt in 1..=attempts {
        let request = CompletionRequest {
            key: &question.id,
            prompt: &prompt,
            params,
        };
        let text = match teacher.complete(&request) {
            Ok(t) => t,
            Err(e) => return Ok(reject(RejectKind::Error, verdicts, Some(e.to_string()))),
        };
        let verdict = match verifier.verify(question, &text) {
            Ok(v) => v.verdict,
            Err(e) => return Ok(reject(RejectKind::Error, verdicts, Some(e.to_string()))),
        };
        verdicts.push(verdict);
        if verdict == Verdict::Correct {
            let (reasoning, final_answer) = split_reasoning(&text, question.task);
            return Ok(Generation::Accepted(CoTRecord {
                id: question.id.clone(),
                prompt: question.prompt.clone(),
                teacher_model: teacher.model_id().to_string(),
                reasoning,
                final_answer,
                verified: true,
                attempt_index: attempt,
            }));
        }
    }
    Ok(reject(RejectKind::Rejected, verdicts, None))
}

/// Separate reasoning from the final answer.
///
/// With a `<think>...</think>` span the reasoning is its content and the
/// answer is what follows. Otherwise the answer is the extracted final
/// answer token and the reasoning is everything before it.
pub fn split_reasoning(raw_text: &str, task: Task) -> (String, String) {
    if let Some(open) = raw_text.find("<think>") {
        let body = open + "<think>".len();
        if let Some(len) = raw_text[body..].find("</think>") {
            let close = body + len;
            return (
                raw_text[body..close].trim().to_string(),
                raw_text[close + "</think>".len()..].trim().to_string(),
            );
        }
    }
    let (before, answer) = match locate_final_answer(raw_text, task) {
        Ok(l) => (&raw_text[..l.span.start], raw_text[l.span].to_string()),
        Err(_) => (raw_text, String::new()),
    };
    // an unmatched opening tag would nest badly once re-wrapped
    let before = before.trim();
    let before = before.strip_prefix("<think>").unwrap_or(before);
    (before.trim().to_string(), answer)
}

/// Write `sft.jsonl`. Nothing is written if any record is unverified.
pub fn emit_sft(records: &[CoTRecord], out: &Path) -> Result<usize, CotError> {
    if let Some(bad) = records.iter().find(|r| !r.verified) {
        return Err(CotError::Unverified { id: bad.id.clone() });
    }
    let sft: Vec<SftRecord> = records.iter().map(SftRecord::from_cot).collect();
    Ok(jsonl::write_jsonl(out, &sft)?)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateRun {
    pub accepted: Vec<CoTRecord>,
    pub rejects: Vec<RejectRecord>,
}

impl GenerateRun {
    pub fn rejected(&self) -> usize {
        self.count(RejectKind::Rejected)
    }

    pub fn errored(&self) -> usize {
        self.count(RejectKind::Error)
    }

    fn count(&self, kind: RejectKind) -> usize {
        self.rejects.iter().filter(|r| r.outcome == kind).count()
    }
}

/// Generate for every sampled question, concurrently, keeping input order.
/// Repeated ids are processed once.
pub fn generate_all(
    questions: &[Question],
    teacher: &dyn CompletionBackend,
    verifier: &Verifier,
    opts: &GenerateOptions,
) -> Result<GenerateRun, CotError> {
    if opts.attempts == 0 {
        return Err(CotError::NoAttempts);
    }
    let mut seen = HashSet::new();
    let unique: Vec<&Question> = questions
        .iter()
        .filter(|q| seen.insert(q.id.as_str()))
        .collect();
    let results = map_ordered(
        &unique,
        opts.workers,
        |_, q| generate_cot(q, teacher, verifier, opts.attempts, &opts.params),
        |_, _| {},
    );
    let mut run = GenerateRun::default();
    for r in results {
        match r? {
            Generation::Accepted(c) => run.accepted.push(c),
            Generation::Rejected(r) => run.rejects.push(r),
        }
    }
    Ok(run)
}

/// Write `cot.jsonl`, `sft.jsonl` and the rejects sidecar.
pub fn write_run(
    run: &GenerateRun,
    cot: &Path,
    sft: &Path,
    rejects: &Path,
) -> Result<(), CotError> {
    emit_sft(&run.accepted, sft)?;
    jsonl::write_jsonl(cot, &run.accepted)?;
    jsonl::write_jsonl(rejects, &run.rejects)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;

    fn gen(script: Vec<&str>, attempts: u32) -> Generation {
        let teacher = MockBackend::scripted("teacher", [("q", script)]);
        let q = Question::math("q", "What is 4+5?", "9");
        generate_cot(
            &q,
            &teacher,
            &Verifier::default(),
            attempts,
            &DecodingParams::greedy(),
        )
        .unwrap()
    }

    #[test]
    fn first_correct_attempt_wins() {
        match gen(vec!["<think>4+5</think>\\boxed{9}"], 1) {
            Generation::Accepted(c) => {
                assert_eq!(c.attempt_index, 1);
                assert!(c.verified);
                assert_eq!(c.reasoning, "4+5");
                assert_eq!(c.final_answer, "\\boxed{9}");
            }
            other => panic!("{other:?}"),
        }
        match gen(vec!["\\boxed{1}", "\\boxed{2}", "\\boxed{9}"], 3) {
            Generation::Accepted(c) => assert_eq!(c.attempt_index, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn always_wrong_is_rejected_with_verdicts() {
        match gen(vec!["\\boxed{1}"], 2) {
            Generation::Rejected(r) => {
                assert_eq!(r.outcome, RejectKind::Rejected);
                assert_eq!(r.verdicts, vec![Verdict::Incorrect, Verdict::Incorrect]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn backend_failure_is_error_not_rejection() {
        let teacher = MockBackend::scripted("teacher", [("other", vec!["x"])]);
        let q = Question::math("q", "?", "9");
        match generate_cot(
            &q,
            &teacher,
            &Verifier::default(),
            1,
            &DecodingParams::greedy(),
        )
        .unwrap()
        {
            Generation::Rejected(r) => {
                assert_eq!(r.outcome, RejectKind::Error);
                assert!(r.reason.unwrap().contains("'q'"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            split_reasoning("<think>steps</think>\\boxed{9}", Task::Math),
            ("steps".to_string(), "\\boxed{9}".to_string())
        );
        assert_eq!(
            split_reasoning("add them up, so \\boxed{5}", Task::Math),
            ("add them up, so".to_string(), "\\boxed{5}".to_string())
        );
        assert_eq!(
            split_reasoning("<think>open only, \\boxed{2}", Task::Math),
            ("open only,".to_string(), "\\boxed{2}".to_string())
        );
        let (r, a) = split_reasoning("Plan.\n```python\nprint(1)\n```\n", Task::Code);
        assert_eq!(r, "Plan.");
        assert_eq!(a, "```python\nprint(1)\n```");
    }

    fn record(id: &str, verified: bool) -> CoTRecord {
        CoTRecord {
            id: id.into(),
            prompt: "p".into(),
            teacher_model: "t".into(),
            reasoning: "r".into(),
            final_answer: "\\boxed{1}".into(),
            verified,
            attempt_index: 1,
        }
    }

    #[test]
    fn emit_sft_contract() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sft.jsonl");
        assert_eq!(
            emit_sft(&[record("a", true), record("b", true)], &out).unwrap(),
            2
        );
        let back: Vec<SftRecord> = jsonl::read_jsonl(&out).unwrap();
        assert_eq!(back[0].output, "<think>r</think>\\boxed{1}");

        let out2 = dir.path().join("bad.jsonl");
        assert!(matches!(
            emit_sft(&[record("a", true), record("b", false)], &out2),
            Err(CotError::Unverified { .. })
        ));
        assert!(!out2.exists());

        let empty = dir.path().join("empty.jsonl");
        assert_eq!(emit_sft(&[], &empty).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&empty).unwrap(), "");
    }

    #[test]
    fn generate_all_accounts_for_everything() {
        let teacher = MockBackend::scripted(
            "teacher",
            [("a", vec!["\\boxed{9}"]), ("b", vec!["\\boxed{8}"])],
        );
        let qs = vec![
            Question::math("a", "?", "9"),
            Question::math("b", "?", "9"),
            Question::math("c", "?", "9"),
        ];
        let run = generate_all(
            &qs,
            &teacher,
            &Verifier::default(),
            &GenerateOptions::default(),
        )
        .unwrap();
        assert_eq!(run.accepted.len(), 1);
        assert_eq!(run.rejected(), 1);
        assert_eq!(run.errored(), 1);
        assert_eq!(run.accepted.len() + run.rejects.len(), qs.len());
    }
}
