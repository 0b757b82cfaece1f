//! `tsforge`: the benchmark pipeline as a command line.
//!
//! Every subcommand runs the stage it names plus whatever that stage needs,
//! against one JSON experiment configuration. Completed stages are skipped
//! automatically when the output directory already holds their results under
//! the same configuration hash, so interrupted runs continue where they
//! stopped and finished runs are no-ops.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tsforge_cli::config::load_experiment_config;
use tsforge_cli::pipeline::{execute, Goal};

#[derive(Parser)]
#[command(
    name = "tsforge",
    about = "Global pre-training, per-series fine-tuning, and classical baselines \
             under rolling-origin evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (strict JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; overrides the config's `jobs`. Changes speed only.
    #[arg(long)]
    jobs: Option<usize>,
    /// Continue from the output directory's manifest. This is already the
    /// default; the flag exists so scripts can say what they mean.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// The whole pipeline: pretrain, finetune, evaluate, features, cluster,
    /// rank, report.
    Run(RunArgs),
    /// Pre-train global models on the source corpus.
    Pretrain(RunArgs),
    /// Adapt models to each target series (requires/loads global models).
    Finetune(RunArgs),
    /// Rolling-origin evaluation over the test blocks.
    Evaluate(RunArgs),
    /// Compute the eight-feature battery per target series.
    Features(RunArgs),
    /// Cluster target series around medoids in feature space.
    Cluster(RunArgs),
    /// Friedman/Nemenyi ranking and critical-difference diagrams.
    Rank(RunArgs),
    /// Re-render report.md from whatever the output directory holds.
    Report(RunArgs),
}

impl Command {
    fn split(self) -> (Goal, RunArgs) {
        match self {
            Command::Run(a) => (Goal::Run, a),
            Command::Pretrain(a) => (Goal::Pretrain, a),
            Command::Finetune(a) => (Goal::Finetune, a),
            Command::Evaluate(a) => (Goal::Evaluate, a),
            Command::Features(a) => (Goal::Features, a),
            Command::Cluster(a) => (Goal::Cluster, a),
            Command::Rank(a) => (Goal::Rank, a),
            Command::Report(a) => (Goal::Report, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (goal, args) = cli.command.split();

    let mut config = match load_experiment_config(&args.config) {
        Ok(c) => c,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(out) = args.out {
        config.output = out;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }

    match execute(config, goal) {
        Ok(manifest) => {
            eprintln!(
                "done: {} stage(s) complete, {} file(s), {} recorded failure(s)",
                manifest.stages.len(),
                manifest.files.len(),
                manifest.failures.len()
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
