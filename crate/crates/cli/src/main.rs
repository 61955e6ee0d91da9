//! `fkjump`: exact oracles, particle runs, sweeps, continuous-time
//! simulations and the acceptance suite from the command line.
//!
//! Exit codes: 0 when every assertion passed, 2 when an assertion failed,
//! 1 for configuration or model errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fkjump::FkError;

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "fkjump", version, about = "Geometric interacting-jump particle approximations of Feynman-Kac flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for replication-parallel work.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Suite to run: a sweep suite name, or acceptance criterion ids for `verify`.
    #[arg(long, global = true)]
    suite: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write oracle flows, semigroup constants and structural constants.
    Exact,
    /// Single seeded particle runs per (N, m) cell.
    Particle,
    /// Replicated (N, m) sweep, optionally asserting a convergence-rate suite.
    Sweep,
    /// Continuous-time interacting jump simulation.
    Ctsim,
    /// Run the acceptance suite.
    Verify,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(FkError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<FkError> for CliError {
    fn from(e: FkError) -> Self {
        match e {
            FkError::Config(msg) => CliError::Config(msg),
            other => CliError::Model(other),
        }
    }
}

/// Everything a command needs besides the config file.
#[derive(Debug)]
pub struct Context {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub out_given: bool,
    pub suite: Option<String>,
}

impl Context {
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (set `seed` in the config or pass --seed)".into()))
    }

    pub fn create_out(&self) -> Result<&std::path::Path, CliError> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if matches!(cli.command, Command::Verify) => ExperimentConfig::default(),
        None => return Err(CliError::Config("--config <path> is required for this command".into())),
    };
    let threads = cli.threads.or(cfg.threads);
    if threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    let ctx = Context {
        seed: cli.seed.or(cfg.seed),
        out: config::resolve_out(cli.out.as_deref(), &cfg),
        out_given: cli.out.is_some() || cfg.out.is_some(),
        suite: cli.suite.clone().or_else(|| cfg.suite.clone()),
    };
    fkjump::parallel::with_threads(threads, || match cli.command {
        Command::Exact => commands::exact(&cfg, &ctx),
        Command::Particle => commands::particle(&cfg, &ctx),
        Command::Sweep => suites::sweep(&cfg, &ctx),
        Command::Ctsim => commands::ctsim(&cfg, &ctx),
        Command::Verify => commands::verify(&ctx),
    })
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
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
