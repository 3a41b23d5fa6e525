mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reachgen::cvae::Preset;
use reachgen::Error;

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "reachgen", version, about = "Goal-conditioned motion generation")]
struct Cli {
    /// TOML file merged over the preset defaults.
    #[arg(long, global = true, env = "REACHGEN_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "REACHGEN_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "REACHGEN_PRESET", value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long, global = true, env = "REACHGEN_WORKERS")]
    workers: Option<usize>,
    /// Run directory for every output of the command.
    #[arg(long, global = true, env = "REACHGEN_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::parse(s).ok_or_else(|| format!("unknown preset `{s}` (expected desk or paper)"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate, filter and split a synthetic corpus.
    GenData,
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Roll out a motion toward one or more goals.
    Generate(GenerateArgs),
    /// Run the goal-grid benchmark.
    Evaluate(EvaluateArgs),
    /// Refine a recorded rollout by latent optimization.
    Optimize(OptimizeArgs),
    /// Summarize a motion file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by gen-data; generated in memory if absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Stop after this many epochs (the schedule still uses the configured total).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Goal as x,y,z in meters; repeat for a multi-goal schedule.
    #[arg(long, required = true, value_parser = commands::parse_point)]
    pub goal: Vec<[f64; 3]>,
    #[arg(long, default_value_t = 240)]
    pub duration: usize,
    /// Frame at which the last goal is due; goals are spread evenly up to it.
    #[arg(long)]
    pub target_frame: Option<usize>,
    /// Switch goals when the wrist comes within this many meters.
    #[arg(long)]
    pub reach_radius: Option<f64>,
    /// Divide every target frame by this factor.
    #[arg(long)]
    pub speedup: Option<f64>,
    /// Use z = 0 instead of sampling.
    #[arg(long)]
    pub mean: bool,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Motion file whose first frame is the start pose.
    #[arg(long)]
    pub start: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory holding the rollout written by `generate`.
    #[arg(long)]
    pub record: PathBuf,
    #[arg(long, default_value = "rollout")]
    pub stem: String,
    /// Goal for the final frame; defaults to the record's last goal.
    #[arg(long, value_parser = commands::parse_point)]
    pub goal: Option<[f64; 3]>,
    /// Pelvis waypoint as frame:x,y; repeatable.
    #[arg(long, value_parser = commands::parse_waypoint)]
    pub waypoint: Vec<(usize, [f64; 2])>,
    #[arg(long, default_value_t = 1.0)]
    pub waypoint_weight: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
    /// Also report the distance to this goal.
    #[arg(long, value_parser = commands::parse_point)]
    pub goal: Option<[f64; 3]>,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::DegenerateRotation(_) | Error::InvalidRotation(_) => "rotation",
        Error::DimensionMismatch { .. } => "dimension_mismatch",
        Error::InvalidSkeleton(_) => "invalid_skeleton",
        Error::InvalidConfig(_) => "invalid_config",
        Error::NumericFault { .. } => "numeric_fault",
        Error::StaleTape => "stale_tape",
        Error::SkipWindow { .. } => "skip_window",
        Error::TooFewSequences(_) => "too_few_sequences",
        Error::InfeasibleReach { .. } => "infeasible_reach",
        Error::ScheduleOrder(_) => "schedule_order",
        Error::ModelMismatch { .. } => "model_mismatch",
        Error::SkeletonMismatch { .. } => "skeleton_mismatch",
        Error::VersionMismatch { .. } => "version_mismatch",
        Error::CorruptFile(_) => "corrupt_file",
        Error::Io { .. } => "io",
        Error::Parse(_) => "parse",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error kind=usage: {first}");
            return ExitCode::from(2);
        }
    };
    let over = Overrides {
        preset: cli.preset,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
    };
    let result = config::resolve(cli.config.as_deref(), &over).and_then(|cfg| {
        let mut ctx = commands::Context::new(cfg, cli.config.as_deref(), &std::env::args().collect::<Vec<_>>())?;
        match cli.command {
            Command::GenData => commands::gen_data(&ctx),
            Command::Train(a) => commands::train(&mut ctx, &a),
            Command::Generate(a) => commands::generate(&mut ctx, &a),
            Command::Evaluate(a) => commands::evaluate(&mut ctx, &a),
            Command::Optimize(a) => commands::optimize(&mut ctx, &a),
            Command::Inspect(a) => commands::inspect(&mut ctx, &a),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={}: {}", error_kind(&e), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
