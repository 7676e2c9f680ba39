//! `tsg`: data generation, training, λ sweeps, ablation batteries and report
//! emission for transductive sharpening.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! divergence.

mod commands;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use spec::SharedFlags;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Diverged(String),
}

impl From<tsgraph::Error> for CliError {
    fn from(e: tsgraph::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<tsgraph::error::GraphError> for CliError {
    fn from(e: tsgraph::error::GraphError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<tsgraph::error::AnalysisError> for CliError {
    fn from(e: tsgraph::error::AnalysisError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tsg", version, about = "Transductive sharpening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a two-class CSBM bundle.
    GenCsbm(GenArgs),
    /// Train every seed of one configuration.
    Train(TrainArgs),
    /// Sweep λ and report Glass's Δ against λ = 0.
    Sweep(SweepArgs),
    /// Run the ablation batteries against the symmetric reference.
    Ablate(AblateArgs),
    /// Re-emit a report from earlier outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 500)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    pub p_out: f64,
    #[arg(long, default_value_t = 4.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub shared: SharedFlags,
    /// Relaunch from an emitted spec.json; other flags are ignored.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Train with the dedicated cross-entropy loop instead of the sharpening
    /// objective.
    #[arg(long, hide = true)]
    pub supervised_only: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub shared: SharedFlags,
    /// λ grid as start:stop:step (closed); λ = 0 is always added.
    #[arg(long, allow_hyphen_values = true)]
    pub lambdas: String,
    /// Comma-separated bundle directories; defaults to --data.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<PathBuf>,
    /// Reuse finished (λ, seed) runs whose digest matches.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Battery {
    All,
    Offset,
    LabeledRemoved,
    Shannon,
    TestOnly,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub shared: SharedFlags,
    #[arg(long, value_enum, default_value = "all", alias = "variant")]
    pub battery: Battery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    #[value(alias = "cell_table")]
    CellTable,
    #[value(alias = "sweep_csv")]
    SweepCsv,
    #[value(alias = "entropy_csv")]
    EntropyCsv,
    #[value(alias = "ablation_delta")]
    AblationDelta,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Output directory of an earlier `train`, `sweep` or `ablate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Baseline `train` output for cell tables.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenCsbm(a) => commands::gen_csbm(&a),
        Command::Train(a) => commands::train(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(3)
        }
    }
}
