//! `bps-forge`: discover, simulate, evaluate and optimize BPS models.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use bps_forge::conformance::RepairMethod;
use bps_forge::parameters::BranchingMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "bps-forge",
    version,
    about = "Business process simulation model discovery and assessment"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discover a BPS model from an event log and write model.json.
    Discover(DiscoverArgs),
    /// Simulate a BPS model, one CSV log per run.
    Simulate(SimulateArgs),
    /// Compare a simulated log with a ground-truth log.
    Evaluate(EvaluateArgs),
    /// Search discovery hyper-parameters for the most accurate model.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// Input log and CSV header names.
#[derive(Debug, Args)]
pub struct LogArgs {
    /// Event log (.xes, or CSV otherwise).
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long, default_value = "case_id")]
    pub case_column: String,
    #[arg(long, default_value = "activity")]
    pub activity_column: String,
    /// Resource column; pass an empty string when the log has none.
    #[arg(long, default_value = "resource")]
    pub resource_column: String,
    #[arg(long, default_value = "start_time")]
    pub start_column: String,
    #[arg(long, default_value = "end_time")]
    pub end_column: String,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub input: LogArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.4)]
    pub eta: f64,
    #[arg(long, default_value = "alignment", value_parser = parse_repair)]
    pub repair: RepairMethod,
    #[arg(long, default_value = "discovered", value_parser = parse_branching)]
    pub branching: BranchingMode,
    #[arg(long, default_value_t = 0.5)]
    pub pool_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// BPS model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of simulated logs.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Traces per log (default: the model's trace count).
    #[arg(long)]
    pub traces: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ground: PathBuf,
    #[arg(long)]
    pub simulated: PathBuf,
    /// Also write the pairing to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub input: LogArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Simulation runs per trial.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Trials evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Skip the baseline comparison.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn parse_repair(s: &str) -> Result<RepairMethod, String> {
    s.parse()
}

fn parse_branching(s: &str) -> Result<BranchingMode, String> {
    s.parse()
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unusable input files.
    #[error("{0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn stage(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            message: e.to_string(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BPS_FORGE_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Discover(a) => commands::discover(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Optimize(a) => commands::optimize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
