//! `seqdetect`: run and inspect multi-stream sequential detection experiments.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, Experiment};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl From<seqdetect::Error> for CliError {
    fn from(e: seqdetect::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "seqdetect", version, about = "Sequential identification of signal streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print information constants, lower bounds and approximations.
    Info(Common),
    /// Estimate ESS and error rates for every (kind, threshold) cell.
    Simulate(Common),
    /// Long-format ESS and approximation series for an equal-threshold sweep.
    Figure(Common),
    /// Cross-check the closed forms against the brute-force oracles.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Reduced-scale run.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per cell, overriding the config.
    #[arg(long)]
    trials: Option<u64>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(c: &Common) -> Result<Experiment, CliError> {
    let mut exp = ConfigFile::load(&c.config)?.into_experiment()?;
    if let Some(dir) = &c.out {
        exp.out_dir = dir.clone();
    }
    if let Some(t) = c.trials {
        exp.config.trials = t;
    }
    if let Some(s) = c.seed {
        exp.config.base_seed = s;
    }
    exp.config.validate()?;
    Ok(exp)
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SEQDETECT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SEQDETECT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    threads()?;
    match cli.command {
        Command::Info(c) => commands::info(&load(&c)?).map(|_| true),
        Command::Simulate(c) => commands::simulate(&load(&c)?).map(|_| true),
        Command::Figure(c) => commands::figure(&load(&c)?).map(|_| true),
        Command::Validate { common, quick } => commands::validate(&load(&common)?, quick),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("seqdetect: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Io(_) => 1,
            })
        }
    }
}
