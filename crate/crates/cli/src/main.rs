//! `adacot`: grade questions against a base model, build a target difficulty
//! distribution, sample a training set and distil verified teacher reasoning.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 validation,
//! 4 backend, 5 quarantine threshold exceeded.

mod backends;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adacot_core::config::DistributionMode;
use adacot_core::domain::GradingMethod;
use adacot_core::sampler::Shortfall;

#[derive(Parser, Debug)]
#[command(
    name = "adacot",
    version,
    about = "Model-adaptive chain-of-thought dataset pipeline"
)]
struct Cli {
    /// TOML config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Replace every backend with the scripted mocks named in the config.
    #[arg(long, global = true)]
    mock: bool,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate question files without calling any model.
    IngestCheck(IngestCheckArgs),
    /// Probe the base model on each question, verify and grade difficulty.
    Grade(GradeArgs),
    /// Write a target difficulty distribution.
    Distribution(DistributionArgs),
    /// Draw a question set following a distribution.
    Sample(SampleArgs),
    /// Query the teacher on sampled questions and keep verified answers.
    Generate(GenerateArgs),
    /// Per-label counts and score summaries of a graded file.
    Stats(StatsArgs),
    /// grade -> distribution -> sample -> generate, driven by the config.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct IngestCheckArgs {
    #[arg(long, num_args = 1.., required = true)]
    questions: Vec<PathBuf>,
    /// Skip malformed lines instead of stopping at the first one.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args, Debug)]
struct GradeArgs {
    /// Question files (questions.jsonl layout).
    #[arg(long, num_args = 1.., required_unless_present = "from_graded")]
    questions: Vec<PathBuf>,
    /// Re-label the traces in an existing graded file instead of probing.
    #[arg(long, conflicts_with = "questions")]
    from_graded: Option<PathBuf>,
    /// Base model id (overrides the config).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    method: Option<GradingMethod>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Completions per question; majority verdict when above 1.
    #[arg(long)]
    samples: Option<u32>,
    /// Largest tolerated fraction of quarantined questions.
    #[arg(long)]
    max_quarantine: Option<f64>,
    /// Ignore any checkpoint journal and start over.
    #[arg(long)]
    fresh: bool,
}

#[derive(Args, Debug)]
struct DistributionArgs {
    #[arg(long)]
    mode: DistributionMode,
    /// Graded evaluation set (eval mode).
    #[arg(long)]
    graded: Option<PathBuf>,
    /// Five comma-separated level weights, L1 first (curriculum mode).
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    easy_weight: Option<f64>,
    /// Existing distribution.json (external mode).
    #[arg(long)]
    from: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    graded: PathBuf,
    #[arg(long, conflicts_with = "weights")]
    dist: Option<PathBuf>,
    /// Curriculum weights, as an alternative to --dist.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, requires = "weights")]
    easy_weight: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shortfall: Option<Shortfall>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    sampled: PathBuf,
    /// Teacher model id (overrides the config).
    #[arg(long)]
    teacher: Option<String>,
    #[arg(long)]
    attempts: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    sft: PathBuf,
    #[arg(long)]
    rejects: PathBuf,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    graded: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Output directory (overrides pipeline.out_dir).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = commands::exit_code(&err);
            eprintln!(
                "error[{}]: {}",
                commands::category(code),
                commands::render_chain(&err)
            );
            ExitCode::from(code)
        }
    }
}
