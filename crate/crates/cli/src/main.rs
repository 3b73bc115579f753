//! `randrelu` command-line experiments.
//!
//! Every command resolves its configuration (JSON file, then flag
//! overrides), writes `manifest.json` into the output directory and stamps
//! each artifact with the manifest's SHA-256.
//!
//! Exit codes: 0 success, 1 validation failure, 2 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the rayon worker count.
pub const WORKERS_ENV: &str = "RANDRELU_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "randrelu", version, about = "Random ReLU approximation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the integral representation of a target.
    Repcheck(Common),
    /// Importance-sampled network and its certified error.
    Approx(Common),
    /// Least-squares output layer on random hidden parameters.
    Fit(Common),
    /// Certified error against m for both fit modes.
    Scaling(Common),
    /// Evaluate the closed-form error and sizing bounds.
    Bounds(Common),
    /// Adaptive-control scenario with the random feature map.
    Mrac(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed (first seed for sweeps).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Failure probability of the high-probability bounds.
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    /// Checks ran but at least one failed; the report is already written.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) | CliError::CheckFailed(_) => 2,
        }
    }
}

impl From<randrelu::Error> for CliError {
    fn from(e: randrelu::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("i/o: {e}"))
    }
}

fn init_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("cannot start {n} workers: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_workers()?;
    match cli.command {
        Command::Repcheck(c) => commands::repcheck(&c),
        Command::Approx(c) => commands::approx(&c),
        Command::Fit(c) => commands::fit(&c),
        Command::Scaling(c) => commands::scaling(&c),
        Command::Bounds(c) => commands::bounds(&c),
        Command::Mrac(c) => commands::mrac(&c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
