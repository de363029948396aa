//! `faultwalk` command-line entry point.

mod commands;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use faultwalk::curriculum::CurriculumMode;

#[derive(Debug, Parser)]
#[command(name = "faultwalk", version, about = "Fault-tolerant quadruped locomotion with curriculum dynamics randomization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy under one curriculum mode.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the random policy) under plain/broken/custom conditions.
    Eval(EvalArgs),
    /// Evaluate a checkpoint over a grid of failure coefficients.
    Sweep(SweepArgs),
    /// Print the interval schedule of a curriculum mode without training.
    ScheduleTrace(ScheduleArgs),
    /// Rank policies from summary CSV files and plot them.
    Compare(CompareArgs),
    /// Render SVG plots from summary or sweep CSV files.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Sectioned key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<CurriculumMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_env_steps: Option<u64>,
    #[arg(long)]
    num_workers: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Restrict every sampled coefficient to `LO,HI`.
    #[arg(long, value_name = "LO,HI")]
    train_clamp: Option<String>,
    /// Run directory; defaults to a timestamped directory under the output root.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long, conflicts_with_all = ["config", "mode", "seed", "total_env_steps", "num_workers", "train_clamp"])]
    resume: Option<PathBuf>,
    /// Print a progress line every this many updates (0 silences them).
    #[arg(long, default_value_t = 100)]
    log_every: u64,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "random")]
    checkpoint: Option<PathBuf>,
    /// Evaluate uniform random torques instead of a checkpoint.
    #[arg(long, conflicts_with = "checkpoint")]
    random: bool,
    /// Label used in reports; defaults to the checkpoint's curriculum mode.
    #[arg(long)]
    policy_name: Option<String>,
}

#[derive(Debug, Args)]
struct ProtocolArgs {
    /// Sectioned config file with an [eval] section; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated evaluation seeds.
    #[arg(long, value_name = "S1,S2,...")]
    seeds: Option<String>,
    /// Two seeds of ten trials instead of five seeds of a hundred.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Conditions to run: plain, broken, custom (repeatable).
    #[arg(long = "condition", value_name = "NAME")]
    conditions: Vec<String>,
    /// Fixed coefficient for the custom condition.
    #[arg(long, conflicts_with = "k_range")]
    k: Option<f64>,
    /// Uniform coefficient interval for the custom condition.
    #[arg(long, value_name = "LO,HI")]
    k_range: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Comma-separated coefficients; defaults to 0.0, 0.1, ..., 1.0.
    #[arg(long, value_name = "K1,K2,...")]
    k_grid: Option<String>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long)]
    mode: CurriculumMode,
    #[arg(long)]
    total_steps: u64,
    #[arg(long, default_value_t = 11)]
    stages: usize,
    /// Spacing of rows in steps; defaults to one row per linear stage. Use
    /// the training horizon times the worker count to match a run's log.
    #[arg(long)]
    step_every: Option<u64>,
    #[arg(long)]
    fixed_k: Option<f64>,
    #[arg(long, value_name = "LO,HI")]
    train_clamp: Option<String>,
    #[arg(long)]
    initial_threshold: Option<f64>,
    /// For adaptive modes: file with one episode return per line to replay.
    #[arg(long)]
    returns: Option<PathBuf>,
    #[arg(long)]
    buffer_size: Option<usize>,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Summary CSV files written by `eval`.
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Summary or sweep CSV files written by `eval`/`sweep`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::ScheduleTrace(a) => commands::schedule_trace(a),
        Command::Compare(a) => commands::compare(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
