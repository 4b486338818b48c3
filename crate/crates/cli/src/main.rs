//! `posetune` — runs the auto-configuration workflow stage by stage.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use posetune::harness::{
    cmd_evaluate, cmd_generate, cmd_optimize, cmd_train_dr, ExperimentConfig, Metric, StageOutcome,
};

#[derive(Parser, Debug)]
#[command(name = "posetune", version, about = "Synthetic-data auto-configuration of a 6D pose pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the first N catalog objects.
    #[arg(long, global = true)]
    objects: Option<usize>,
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricArg>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Re-run a stage even if it already completed.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the seeded train / validation / test scenes.
    Generate,
    /// Learn per-object noise levels with the scheduled controller.
    TrainDr,
    /// Continuous then discrete parameter optimization.
    Optimize {
        /// Optimize on clean validation scenes.
        #[arg(long)]
        no_dr: bool,
    },
    /// Score default, optimized and budget-selected parameters on the test scenes.
    Evaluate {
        /// Runtime budget in seconds per image.
        #[arg(long)]
        budget: Option<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MetricArg {
    Add,
    Bop,
}

fn config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.objects {
        cfg = cfg.with_object_count(n)?;
    }
    if let Some(m) = cli.metric {
        cfg.metric = match m {
            MetricArg::Add => Metric::Add,
            MetricArg::Bop => Metric::Bop,
        };
    }
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = config(cli)?;
    let (stage, outcome) = match &cli.command {
        Command::Generate => ("generate", cmd_generate(&cfg, cli.force)),
        Command::TrainDr => ("train-dr", cmd_train_dr(&cfg, cli.force)),
        Command::Optimize { no_dr } => ("optimize", cmd_optimize(&cfg, !no_dr, cli.force)),
        Command::Evaluate { budget } => ("evaluate", cmd_evaluate(&cfg, *budget, cli.force)),
    };
    match outcome.with_context(|| format!("stage {stage} failed"))? {
        StageOutcome::Ran => eprintln!("{stage}: done ({})", cfg.output_dir.display()),
        StageOutcome::Skipped => eprintln!("{stage}: already complete, skipping (use --force to re-run)"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
