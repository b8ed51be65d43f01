//! Command implementations behind the `fedcm` binary.
//!
//! Every command reads a scenario (except `compare`), computes all results in
//! memory and only then writes its files under the output directory, so a
//! failed run leaves no partial outputs behind.

mod compare;
mod detect;
mod federate;
mod output;
mod sweep;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use fedcm::scenario::{parse_config, ScenarioConfig};

pub use compare::{cmd_compare, read_samples, AlternativeArg, CompareArgs, CompareReport};
pub use detect::cmd_detect;
pub use federate::cmd_federate;
pub use output::OutputDir;
pub use sweep::{cell_seed, cmd_sweep, Method, SweepArgs, SweepAxis, SweepRow};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_NOT_SIGNIFICANT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "fedcm", version, about = "Federated condition monitoring simulator")]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` of the scenario.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` of the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for client training and sweep cells.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// SOM detection trace and sensor ranking.
    Detect,
    /// Federated training with per-round reports.
    Federate,
    /// Cross product of sweep values, methods and repeats.
    Sweep(SweepArgs),
    /// One-sided Mann-Whitney U test between two result files.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotSignificant,
}

impl Outcome {
    pub fn code(&self) -> u8 {
        match self {
            Self::Success => EXIT_OK,
            Self::NotSignificant => EXIT_NOT_SIGNIFICANT,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<fedcm::Error> for CliError {
    fn from(e: fedcm::Error) -> Self {
        if e.is_config() {
            Self::Config(e.to_string())
        } else {
            Self::Runtime(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Loads the scenario and applies the `--seed` and `--out` overrides.
pub fn load_scenario(cli: &Cli) -> CliResult<ScenarioConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    let mut cfg = parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let dispatch = || -> CliResult<Outcome> {
        match &cli.command {
            Command::Detect => cmd_detect(&load_scenario(cli)?),
            Command::Federate => cmd_federate(&load_scenario(cli)?),
            Command::Sweep(args) => cmd_sweep(&load_scenario(cli)?, args),
            Command::Compare(args) => cmd_compare(args, cli.out.as_deref()),
        }
    };
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?
            .install(dispatch),
        None => dispatch(),
    }
}
