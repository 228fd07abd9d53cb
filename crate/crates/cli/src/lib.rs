//! `airmap` command-line pipeline.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::{validate_config, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] airmap_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(airmap_core::Error::Config(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "airmap", version, about = "Air-pollution station QC, modelling and global map products")]
#[command(after_help = config::CONFIG_HELP)]
pub struct Cli {
    /// Run configuration file (TOML)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker thread cap; 1 forces serial execution
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Overrides `run.seed`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `paths.output`
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Baseline,
    WithinNetwork,
    BetweenCountry,
    BetweenContinent,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply station QC rules and write the rejection report
    Qc,
    /// Assemble feature vectors for every QC-passing measurement
    Features,
    /// Write the stratified hold-out split and spatial fold plans
    Split,
    /// Train a point model on the stratified split
    Train,
    /// Randomized hyperparameter search
    Tune,
    /// Run a validation protocol and score every station
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentArg,
    },
    /// Train the quantile triplet; map intervals for configured hours
    Intervals,
    /// Predict grid tiles for the configured hours
    PredictGrid,
    /// DAQI index, summation and driving-pollutant maps from point tiles
    Aqi,
    /// Summarize score files into per-experiment statistics
    Report,
    /// Write a synthetic station world and covariates (no config needed)
    Synth {
        /// Days of hourly data
        #[arg(long, default_value_t = 30)]
        days: usize,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("airmap: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => airmap_core::grid::with_threads(n, || commands::dispatch(&cli))?,
        None => commands::dispatch(&cli),
    }
}
