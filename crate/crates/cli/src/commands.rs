use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use adacot_core::adaptive_db::{self, DbError, GradeContext, GradeRun};
use adacot_core::config::{Config, ConfigError, DistributionMode};
use adacot_core::cot::{self, CotError, GenerateRun};
use adacot_core::distribution::{self, DistributionError};
use adacot_core::domain::{
    CurriculumSpec, DifficultyDistribution, GradedQuestion, Question, Record, ValidationError,
};
use adacot_core::gateway::GatewayError;
use adacot_core::jsonl::{self, DecodeError, JsonlError};
use adacot_core::sampler::{self, SampleError};

use crate::backends::{self, Role};
use crate::{
    Cli, Command, DistributionArgs, GenerateArgs, GradeArgs, IngestCheckArgs, PipelineArgs,
    SampleArgs, StatsArgs,
};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;
pub const EXIT_QUARANTINE: u8 = 5;

/// A usage problem detected after flag parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if let Some(DbError::QuarantineExceeded { .. }) = cause.downcast_ref() {
            return EXIT_QUARANTINE;
        }
        if cause.is::<GatewayError>() {
            return EXIT_BACKEND;
        }
        if cause.is::<ValidationError>()
            || cause.is::<SampleError>()
            || cause.is::<ConfigError>()
            || matches!(cause.downcast_ref(), Some(CotError::Unverified { .. }))
            || matches!(
                cause.downcast_ref(),
                Some(DistributionError::Curriculum(_) | DistributionError::Empty)
            )
            || matches!(cause.downcast_ref(), Some(DbError::Journal { .. }))
            || cause.is::<DecodeError>()
            || cause
                .downcast_ref::<JsonlError>()
                .is_some_and(JsonlError::is_validation)
        {
            return EXIT_VALIDATION;
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == ErrorKind::NotFound {
                return EXIT_USAGE;
            }
        }
    }
    EXIT_OTHER
}

/// The error chain on one line. Causes already spelled out by the message
/// above them are skipped.
pub fn render_chain(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

pub fn category(code: u8) -> &'static str {
    match code {
        EXIT_USAGE => "usage",
        EXIT_VALIDATION => "validation",
        EXIT_BACKEND => "backend",
        EXIT_QUARANTINE => "quarantine",
        _ => "failure",
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match &cli.command {
        Command::IngestCheck(a) => ingest_check(a),
        Command::Grade(a) => grade(&config, cli.mock, a),
        Command::Distribution(a) => distribution_cmd(&config, a),
        Command::Sample(a) => sample_cmd(&config, a),
        Command::Generate(a) => generate(&config, cli.mock, a),
        Command::Stats(a) => stats(a),
        Command::Pipeline(a) => pipeline(&config, cli.mock, a),
    }
}

fn ingest_check(args: &IngestCheckArgs) -> Result<()> {
    let got = adaptive_db::ingest(&args.questions, !args.lenient)?;
    println!(
        "{} questions ok, {} duplicate id(s) dropped, {} malformed line(s) skipped",
        got.questions.len(),
        got.duplicates,
        got.skipped
    );
    Ok(())
}

fn read_graded(path: &Path) -> Result<Vec<GradedQuestion>> {
    Ok(jsonl::read_jsonl(path)?)
}

/// Grade `questions` with resume support, write outputs, then enforce the
/// quarantine threshold.
fn grade_to(
    ctx: &GradeContext<'_>,
    questions: &[Question],
    out: &Path,
    opts: adaptive_db::GradeOptions,
) -> Result<GradeRun> {
    let journal = adaptive_db::journal_path(out);
    let opts = adaptive_db::GradeOptions {
        journal: Some(journal.clone()),
        ..opts
    };
    let run = adaptive_db::grade_all(questions, ctx, &opts)?;
    adaptive_db::write_run(out, &run)?;
    run.check_quarantine(opts.max_quarantine_fraction)
        .with_context(|| {
            format!(
                "see {}",
                adaptive_db::sidecar_path(out, "quarantine").display()
            )
        })?;
    // everything is in the output now; a rerun starts clean
    remove_if_exists(&journal)?;
    Ok(run)
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != ErrorKind::NotFound => {
            Err(e).with_context(|| format!("removing {}", path.display()))
        }
        _ => Ok(()),
    }
}

fn grade(config: &Config, mock: bool, args: &GradeArgs) -> Result<()> {
    let mut config = config.clone();
    if let Some(m) = args.method {
        config.grader.method = m;
    }
    let scorer = backends::scorer(&config, mock)?;
    let verifier = config.verifier();
    let grader = config.grader();
    let mut opts = config.grade_options();
    if let Some(w) = args.workers {
        opts.workers = w.max(1);
    }
    if let Some(s) = args.samples {
        if s == 0 {
            return Err(usage("--samples must be at least 1"));
        }
        opts.samples = s;
    }
    if let Some(q) = args.max_quarantine {
        if !(0.0..=1.0).contains(&q) {
            return Err(usage("--max-quarantine must be in [0, 1]"));
        }
        opts.max_quarantine_fraction = q;
    }

    if let Some(src) = &args.from_graded {
        let db = read_graded(src)?;
        let run = adaptive_db::regrade(&db, &verifier, &grader, scorer.as_ref(), opts.workers);
        adaptive_db::write_run(&args.out, &run)?;
        run.check_quarantine(opts.max_quarantine_fraction)?;
        println!(
            "regraded {} trace(s) with {}; {} quarantined",
            run.graded.len(),
            grader.method,
            run.quarantined.len()
        );
        return Ok(());
    }

    let ingested = adaptive_db::ingest(&args.questions, true)?;
    let base = backends::completion(&config, mock, Role::Base, args.model.as_deref())?;
    let ctx = GradeContext {
        base: base.as_ref(),
        scorer: scorer.as_ref(),
        verifier: &verifier,
        grader: &grader,
    };
    if args.fresh {
        remove_if_exists(&adaptive_db::journal_path(&args.out))?;
    }
    let run = grade_to(&ctx, &ingested.questions, &args.out, opts)?;
    println!(
        "graded {} question(s) ({} resumed), {} quarantined -> {}",
        run.graded.len(),
        run.resumed,
        run.quarantined.len(),
        args.out.display()
    );
    Ok(())
}

fn parse_curriculum(weights: &str, easy_weight: Option<f64>) -> Result<CurriculumSpec> {
    let weights = distribution::parse_weights(weights).map_err(usage)?;
    Ok(CurriculumSpec {
        weights,
        easy_weight: easy_weight.unwrap_or(0.0),
    })
}

fn distribution_cmd(config: &Config, args: &DistributionArgs) -> Result<()> {
    let dist = match args.mode {
        DistributionMode::Eval => {
            let graded = args
                .graded
                .as_ref()
                .ok_or_else(|| usage("--mode eval needs --graded <graded eval set>"))?;
            distribution::build_eval_distribution(&read_graded(graded)?)?
        }
        DistributionMode::Curriculum => {
            let spec = match &args.weights {
                Some(w) => parse_curriculum(w, args.easy_weight)?,
                None => config
                    .distribution
                    .curriculum()
                    .ok_or_else(|| usage("--mode curriculum needs --weights w1,w2,w3,w4,w5"))?,
            };
            distribution::build_curriculum_distribution(&spec)?
        }
        DistributionMode::External => {
            let from = args
                .from
                .as_ref()
                .or(config.distribution.path.as_ref())
                .ok_or_else(|| usage("--mode external needs --from <distribution.json>"))?;
            distribution::load_external_distribution(from)?
        }
    };
    jsonl::write_json(&args.out, &dist)?;
    println!("{} -> {}", render_probs(&dist), args.out.display());
    Ok(())
}

fn render_probs(d: &DifficultyDistribution) -> String {
    adacot_core::domain::Level::ALL
        .iter()
        .map(|l| format!("{}={:.4}", l.as_str(), d.prob(*l)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn sample_cmd(config: &Config, args: &SampleArgs) -> Result<()> {
    let dist = match (&args.dist, &args.weights) {
        (Some(path), _) => jsonl::read_json::<DifficultyDistribution>(path)?,
        (None, Some(w)) => {
            distribution::build_curriculum_distribution(&parse_curriculum(w, args.easy_weight)?)?
        }
        (None, None) => {
            return Err(usage(
                "sample needs --dist <distribution.json> or --weights",
            ))
        }
    };
    let db = read_graded(&args.graded)?;
    let n = args.n.unwrap_or(config.sampler.n);
    let seed = args.seed.unwrap_or(config.sampler.seed);
    let shortfall = args.shortfall.unwrap_or(config.sampler.shortfall);
    let picked = sampler::sample(&db, &dist, n, seed, shortfall)?;
    jsonl::write_jsonl(&args.out, &picked)?;
    println!(
        "sampled {} of {} (seed {seed}, {shortfall}), L1 fit {:.4} -> {}",
        picked.len(),
        db.len(),
        sampler::check_fit(&picked, &dist),
        args.out.display()
    );
    Ok(())
}

fn generate(config: &Config, mock: bool, args: &GenerateArgs) -> Result<()> {
    let sampled = read_graded(&args.sampled)?;
    let questions: Vec<Question> = sampled.into_iter().map(|g| g.question).collect();
    let mut opts = config.generate_options();
    if let Some(a) = args.attempts {
        if a == 0 {
            return Err(usage("--attempts must be at least 1"));
        }
        opts.attempts = a;
    }
    if let Some(t) = args.temperature {
        opts.params.temperature = t;
    }
    if let Some(w) = args.workers {
        opts.workers = w.max(1);
    }
    let teacher = backends::completion(config, mock, Role::Teacher, args.teacher.as_deref())?;
    let run = cot::generate_all(&questions, teacher.as_ref(), &config.verifier(), &opts)?;
    cot::write_run(&run, &args.out, &args.sft, &args.rejects)?;
    println!("{}", generation_summary(&run, questions.len()));
    Ok(())
}

fn generation_summary(run: &GenerateRun, sampled: usize) -> String {
    format!(
        "{sampled} sampled: {} accepted, {} rejected, {} errored",
        run.accepted.len(),
        run.rejected(),
        run.errored()
    )
}

fn stats(args: &StatsArgs) -> Result<()> {
    let db = read_graded(&args.graded)?;
    let s = adaptive_db::stats(&db);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&s.to_json())?);
    } else {
        print!("{}", s.render());
    }
    Ok(())
}

fn pipeline(config: &Config, mock: bool, args: &PipelineArgs) -> Result<()> {
    if config.pipeline.questions.is_empty() {
        return Err(usage(
            "pipeline.questions is empty; pass --config with a [pipeline] section",
        ));
    }
    let out_dir: PathBuf = args
        .out_dir
        .clone()
        .unwrap_or_else(|| config.pipeline.out_dir.clone());
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = |name: &str| out_dir.join(name);

    // fail fast on a bad target before any model is queried
    let curriculum = match config.distribution.mode {
        DistributionMode::Curriculum => {
            let spec = config.distribution.curriculum().ok_or_else(|| {
                usage("distribution.mode = \"curriculum\" needs distribution.weights")
            })?;
            spec.validate()?;
            Some(spec)
        }
        DistributionMode::Eval if config.distribution.eval_questions.is_empty() => {
            return Err(usage(
                "distribution.mode = \"eval\" needs distribution.eval_questions",
            ))
        }
        _ => None,
    };

    let ingested = adaptive_db::ingest(&config.pipeline.questions, true)?;
    log::info!("{} question(s) ingested", ingested.questions.len());
    let scorer = backends::scorer(config, mock)?;
    let base = backends::completion(config, mock, Role::Base, None)?;
    let verifier = config.verifier();
    let grader = config.grader();
    let ctx = GradeContext {
        base: base.as_ref(),
        scorer: scorer.as_ref(),
        verifier: &verifier,
        grader: &grader,
    };

    let graded = grade_to(
        &ctx,
        &ingested.questions,
        &path("graded.jsonl"),
        config.grade_options(),
    )?;
    println!(
        "grade: {} graded, {} quarantined",
        graded.graded.len(),
        graded.quarantined.len()
    );

    let dist = match config.distribution.mode {
        DistributionMode::Eval => {
            let eval = adaptive_db::ingest(&config.distribution.eval_questions, true)?;
            let run = grade_to(
                &ctx,
                &eval.questions,
                &path("eval_graded.jsonl"),
                config.grade_options(),
            )?;
            distribution::build_eval_distribution(&run.graded)?
        }
        DistributionMode::Curriculum => distribution::build_curriculum_distribution(
            curriculum.as_ref().expect("checked above"),
        )?,
        DistributionMode::External => {
            let from =
                config.distribution.path.as_ref().ok_or_else(|| {
                    usage("distribution.mode = \"external\" needs distribution.path")
                })?;
            distribution::load_external_distribution(from)?
        }
    };
    jsonl::write_json(&path("distribution.json"), &dist)?;
    println!("distribution ({:?}): {}", dist.kind, render_probs(&dist));

    let s = &config.sampler;
    let picked = sampler::sample(&graded.graded, &dist, s.n, s.seed, s.shortfall)?;
    jsonl::write_jsonl(&path("sampled.jsonl"), &picked)?;
    let fit = sampler::check_fit(&picked, &dist);
    println!("sample: {} drawn, L1 fit {fit:.4}", picked.len());

    let teacher = backends::completion(config, mock, Role::Teacher, None)?;
    let questions: Vec<Question> = picked.iter().map(|g| g.question.clone()).collect();
    let run = cot::generate_all(
        &questions,
        teacher.as_ref(),
        &verifier,
        &config.generate_options(),
    )?;
    cot::write_run(
        &run,
        &path("cot.jsonl"),
        &path("sft.jsonl"),
        &path("rejects.jsonl"),
    )?;
    println!("generate: {}", generation_summary(&run, questions.len()));

    let summary = json!({
        "questions": ingested.questions.len(),
        "duplicates": ingested.duplicates,
        "graded": graded.graded.len(),
        "quarantined": graded.quarantined.len(),
        "distribution": dist.probs,
        "sampled": picked.len(),
        "fit_l1": fit,
        "accepted": run.accepted.len(),
        "rejected": run.rejected(),
        "errored": run.errored(),
    });
    let summary_path = path("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary)? + "\n",
    )
    .with_context(|| format!("writing {}", summary_path.display()))?;
    if run.accepted.len() + run.rejects.len() != picked.len() {
        bail!("accounting mismatch: generation outcomes do not cover the sample");
    }
    Ok(())
}
