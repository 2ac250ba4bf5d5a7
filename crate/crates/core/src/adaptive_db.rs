//! The adaptive question database: ingest raw questions, probe the base
//! model on each, verify and grade the responses, and persist the result.
//!
//! Grading journals every finished question to `<out>.journal` so that an
//! interrupted run picks up where it stopped without re-querying the model.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distribution::label_counts;
use crate::domain::{
    GradedQuestion, Level, ModelTrace, Question, Record, ValidationError, Verdict,
};
use crate::gateway::{CompletionBackend, CompletionRequest, DecodingParams, StepScorer};
use crate::grader::Grader;
use crate::jsonl::{self, JsonlError, JsonlLines};
use crate::pool::map_ordered;
use crate::prompts;
use crate::verifier::{Verification, Verifier};

pub const DEFAULT_WORKERS: usize = 8;
pub const DEFAULT_MAX_QUARANTINE_FRACTION: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error(transparent)]
    Input(#[from] JsonlError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: corrupt journal entry: {message}")]
    Journal {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(
        "{quarantined} of {total} questions quarantined, above the allowed fraction {max_fraction}"
    )]
    QuarantineExceeded {
        quarantined: usize,
        total: usize,
        max_fraction: f64,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DbError + '_ {
    move |source| DbError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub questions: Vec<Question>,
    /// Questions dropped because their id was already seen.
    pub duplicates: usize,
    /// Malformed lines skipped in lenient mode.
    pub skipped: usize,
}

/// Read and validate questions from `paths`, in order. Duplicate ids keep
/// their first occurrence. In strict mode the first malformed line aborts
/// with its file and line; otherwise it is logged and skipped.
pub fn ingest<P: AsRef<Path>>(paths: &[P], strict: bool) -> Result<Ingested, DbError> {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for path in paths {
        let path = path.as_ref();
        for item in JsonlLines::open(path)? {
            let (line, text) = item?;
            let question: Question = match jsonl::decode_record(&text) {
                Ok(q) => q,
                Err(source) => {
                    let err = JsonlError::Line {
                        path: path.to_path_buf(),
                        line,
                        source,
                    };
                    if strict {
                        return Err(err.into());
                    }
                    log::warn!("skipping {err}");
                    out.skipped += 1;
                    continue;
                }
            };
            if seen.insert(question.id.clone()) {
                out.questions.push(question);
            } else {
                log::warn!(
                    "{}:{line}: duplicate id '{}' ignored",
                    path.display(),
                    question.id
                );
                out.duplicates += 1;
            }
        }
    }
    if out.duplicates > 0 {
        log::warn!("{} duplicate question id(s) dropped", out.duplicates);
    }
    Ok(out)
}

/// Pipeline stage at which a question failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generate,
    Verify,
    Grade,
}

/// A question that could not be graded, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarantineRecord {
    pub id: String,
    pub model_id: String,
    pub stage: Stage,
    pub reason: String,
}

impl Record for QuarantineRecord {
    fn validate(&self) -> Result<(), ValidationError> {
        if self.id.is_empty() {
            return Err(ValidationError::new("id", "must be nonempty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Graded(GradedQuestion),
    Quarantined(QuarantineRecord),
}

#[derive(Debug, Clone)]
pub struct GradeOptions {
    pub workers: usize,
    /// Decoding parameters for probing the base model.
    pub probe: DecodingParams,
    /// Completions per question; above 1 the majority verdict decides.
    pub samples: u32,
    pub max_quarantine_fraction: f64,
    /// Append-only checkpoint file; `None` disables resume.
    pub journal: Option<PathBuf>,
}

impl Default for GradeOptions {
    fn default() -> Self {
        Self {
            workers: DEFAULT_WORKERS,
            probe: DecodingParams::greedy(),
            samples: 1,
            max_quarantine_fraction: DEFAULT_MAX_QUARANTINE_FRACTION,
            journal: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradeRun {
    /// In input order.
    pub graded: Vec<GradedQuestion>,
    pub quarantined: Vec<QuarantineRecord>,
    /// How many graded records were taken from the journal.
    pub resumed: usize,
}

impl GradeRun {
    pub fn total(&self) -> usize {
        self.graded.len() + self.quarantined.len()
    }

    pub fn check_quarantine(&self, max_fraction: f64) -> Result<(), DbError> {
        let total = self.total();
        if total > 0 && self.quarantined.len() as f64 > max_fraction * total as f64 {
            return Err(DbError::QuarantineExceeded {
                quarantined: self.quarantined.len(),
                total,
                max_fraction,
            });
        }
        Ok(())
    }
}

/// Shared context for grading one question.
pub struct GradeContext<'a> {
    pub base: &'a dyn CompletionBackend,
    pub scorer: &'a dyn StepScorer,
    pub verifier: &'a Verifier,
    pub grader: &'a Grader,
}

impl GradeContext<'_> {
    fn quarantine(&self, q: &Question, stage: Stage, reason: impl ToString) -> Outcome {
        Outcome::Quarantined(QuarantineRecord {
            id: q.id.clone(),
            model_id: self.base.model_id().to_string(),
            stage,
            reason: reason.to_string(),
        })
    }

    /// Probe, verify and grade a single question.
    pub fn grade_one(&self, q: &Question, params: &DecodingParams, samples: u32) -> Outcome {
        let prompt = prompts::render(q);
        let mut probes: Vec<(String, Verification)> = Vec::new();
        for _ in 0..samples.max(1) {
            let request = CompletionRequest {
                key: &q.id,
                prompt: &prompt,
                params,
            };
            let text = match self.base.complete(&request) {
                Ok(t) => t,
                Err(e) => return self.quarantine(q, Stage::Generate, e),
            };
            match self.verifier.verify(q, &text) {
                Ok(v) => probes.push((text, v)),
                Err(e) => return self.quarantine(q, Stage::Verify, e),
            }
        }
        let (raw_text, verification) = majority(probes);
        self.finish(q, raw_text, verification)
    }

    fn finish(&self, q: &Question, raw_text: String, v: Verification) -> Outcome {
        let trace = ModelTrace {
            question_id: q.id.clone(),
            model_id: self.base.model_id().to_string(),
            raw_text,
            extracted_answer: v.extracted,
            verdict: v.verdict,
        };
        match self.grader.label(q, &trace, v.report.as_ref(), self.scorer) {
            Ok(difficulty) => Outcome::Graded(GradedQuestion {
                question: q.clone(),
                trace,
                difficulty,
            }),
            Err(e) => self.quarantine(q, Stage::Grade, e),
        }
    }
}

/// Representative probe under a majority vote: the first correct response
/// if more than half are correct, otherwise the first that is not.
fn majority(mut probes: Vec<(String, Verification)>) -> (String, Verification) {
    let correct = probes
        .iter()
        .filter(|(_, v)| v.verdict == Verdict::Correct)
        .count();
    let want_correct = 2 * correct > probes.len();
    let idx = probes
        .iter()
        .position(|(_, v)| (v.verdict == Verdict::Correct) == want_correct)
        .unwrap_or(0);
    probes.swap_remove(idx)
}

/// Grade every question against the base model.
///
/// Finished questions found in the journal (same id and model) are reused;
/// quarantined ones are retried. Output order follows `questions`.
pub fn grade_all(
    questions: &[Question],
    ctx: &GradeContext<'_>,
    opts: &GradeOptions,
) -> Result<GradeRun, DbError> {
    if questions.is_empty() {
        log::warn!("no questions to grade");
        return Ok(GradeRun::default());
    }
    let model_id = ctx.base.model_id();
    let mut done = match &opts.journal {
        Some(path) => load_journal(path, model_id)?,
        None => HashMap::new(),
    };
    let pending: Vec<&Question> = questions
        .iter()
        .filter(|q| !done.contains_key(&q.id))
        .collect();
    let resumed = questions.len() - pending.len();
    if resumed > 0 {
        log::info!(
            "resuming: {resumed} question(s) already graded, {} to go",
            pending.len()
        );
    }

    let journal = match &opts.journal {
        Some(path) => Some((
            path.as_path(),
            Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(io_err(path))?,
            ),
        )),
        None => None,
    };
    let mut journal_error = None;
    let fresh = map_ordered(
        &pending,
        opts.workers,
        |_, q| ctx.grade_one(q, &opts.probe, opts.samples),
        |_, outcome| {
            if let (Some((path, file)), Outcome::Graded(g)) = (&journal, outcome) {
                if journal_error.is_none() {
                    if let Err(e) = append_line(&mut file.lock().unwrap(), g) {
                        journal_error = Some(io_err(path)(e));
                    }
                }
            }
        },
    );
    if let Some(e) = journal_error {
        return Err(e);
    }

    let mut fresh: HashMap<&str, Outcome> =
        pending.iter().map(|q| q.id.as_str()).zip(fresh).collect();
    let mut run = GradeRun {
        resumed,
        ..GradeRun::default()
    };
    for q in questions {
        if let Some(g) = done.remove(&q.id) {
            run.graded.push(g);
            continue;
        }
        match fresh.remove(q.id.as_str()) {
            Some(Outcome::Graded(g)) => run.graded.push(g),
            Some(Outcome::Quarantined(r)) => {
                log::warn!("quarantined {} at {:?}: {}", r.id, r.stage, r.reason);
                run.quarantined.push(r);
            }
            None => unreachable!("every pending question has an outcome"),
        }
    }
    Ok(run)
}

fn append_line(file: &mut File, record: &GradedQuestion) -> io::Result<()> {
    let mut line = jsonl::encode_record(record);
    line.push('\n');
    // one write per record keeps a torn entry confined to the tail
    file.write_all(line.as_bytes())?;
    file.flush()
}

/// Completed entries of a journal for `model_id`, keyed by question id. A
/// torn final line (no newline) from an interrupted write is cut off.
pub fn load_journal(
    path: &Path,
    model_id: &str,
) -> Result<HashMap<String, GradedQuestion>, DbError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        log::warn!(
            "{}: dropping {} byte(s) of an unfinished entry",
            path.display(),
            bytes.len() - complete
        );
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        file.set_len(complete as u64).map_err(io_err(path))?;
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| DbError::Journal {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: GradedQuestion = jsonl::decode_record(line).map_err(|e| DbError::Journal {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if g.trace.model_id == model_id {
            out.insert(g.id().to_string(), g);
        }
    }
    Ok(out)
}

/// `graded.jsonl` -> `graded.<tag>.jsonl`, next to it.
pub fn sidecar_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.jsonl"))
}

pub fn journal_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".journal");
    PathBuf::from(name)
}

/// Write the graded output and, if any, the quarantine sidecar. A stale
/// sidecar from an earlier run is removed.
pub fn write_run(out: &Path, run: &GradeRun) -> Result<(), DbError> {
    jsonl::write_jsonl(out, &run.graded)?;
    let side = sidecar_path(out, "quarantine");
    if run.quarantined.is_empty() {
        match fs::remove_file(&side) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(&side)(e)),
            _ => {}
        }
    } else {
        jsonl::write_jsonl(&side, &run.quarantined)?;
    }
    Ok(())
}

/// Re-label existing traces under a different grader (e.g. UT instead of
/// PRM) without querying the base model again. Verdicts are recomputed so
/// the unit-test report is available.
pub fn regrade(
    db: &[GradedQuestion],
    verifier: &Verifier,
    grader: &Grader,
    scorer: &dyn StepScorer,
    workers: usize,
) -> GradeRun {
    let outcomes = map_ordered(
        db,
        workers,
        |_, g| {
            let quarantine = |stage, reason: String| {
                Outcome::Quarantined(QuarantineRecord {
                    id: g.id().to_string(),
                    model_id: g.trace.model_id.clone(),
                    stage,
                    reason,
                })
            };
            let v = match verifier.verify(&g.question, &g.trace.raw_text) {
                Ok(v) => v,
                Err(e) => return quarantine(Stage::Verify, e.to_string()),
            };
            let trace = ModelTrace {
                extracted_answer: v.extracted.clone(),
                verdict: v.verdict,
                ..g.trace.clone()
            };
            match grader.label(&g.question, &trace, v.report.as_ref(), scorer) {
                Ok(difficulty) => Outcome::Graded(GradedQuestion {
                    question: g.question.clone(),
                    trace,
                    difficulty,
                }),
                Err(e) => quarantine(Stage::Grade, e.to_string()),
            }
        },
        |_, _| {},
    );
    let mut run = GradeRun::default();
    for o in outcomes {
        match o {
            Outcome::Graded(g) => run.graded.push(g),
            Outcome::Quarantined(r) => run.quarantined.push(r),
        }
    }
    run
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LevelStats {
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DbStats {
    pub total: usize,
    pub levels: [LevelStats; 6],
}

pub fn stats(db: &[GradedQuestion]) -> DbStats {
    let counts = label_counts(db.iter().map(GradedQuestion::level));
    let mut levels = [LevelStats::default(); 6];
    for level in Level::ALL {
        let scores: Vec<f64> = db
            .iter()
            .filter(|g| g.level() == level)
            .filter_map(|g| g.difficulty.score)
            .collect();
        let s = &mut levels[level.index()];
        s.count = counts[level.index()];
        if !scores.is_empty() {
            s.mean = Some(scores.iter().sum::<f64>() / scores.len() as f64);
            s.min = scores.iter().copied().reduce(f64::min);
            s.max = scores.iter().copied().reduce(f64::max);
        }
    }
    DbStats {
        total: db.len(),
        levels,
    }
}

impl DbStats {
    pub fn counts(&self) -> [usize; 6] {
        self.levels.map(|s| s.count)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut levels = serde_json::Map::new();
        for level in Level::ALL {
            let s = &self.levels[level.index()];
            let frac = if self.total == 0 {
                0.0
            } else {
                s.count as f64 / self.total as f64
            };
            levels.insert(
                level.as_str().to_string(),
                json!({"count": s.count, "fraction": frac, "mean": s.mean, "min": s.min, "max": s.max}),
            );
        }
        json!({"total": self.total, "levels": levels})
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<6} {:>7} {:>9} {:>8} {:>8} {:>8}\n",
            "label", "count", "fraction", "mean", "min", "max"
        );
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        for level in Level::ALL {
            let s = &self.levels[level.index()];
            let frac = if self.total == 0 {
                0.0
            } else {
                s.count as f64 / self.total as f64
            };
            out.push_str(&format!(
                "{:<6} {:>7} {:>9.4} {:>8} {:>8} {:>8}\n",
                level.as_str(),
                s.count,
                frac,
                fmt(s.mean),
                fmt(s.min),
                fmt(s.max)
            ));
        }
        out.push_str(&format!("{:<6} {:>7}\n", "total", self.total));
        out
    }
}
