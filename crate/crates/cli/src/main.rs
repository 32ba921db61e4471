//! `spinrad`: command-line driver for the experiments.
//!
//! Exit status: 0 when every check passes, 1 when a check fails (the
//! failing checks are named on stderr), 2 on usage or configuration errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::output::Output;

#[derive(Parser, Debug)]
#[command(name = "spinrad", version, about = "Massless Dirac radiation fields and scattering maps")]
struct Cli {
    /// TOML experiment config; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set grid.n=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for randomized checks (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Exact and floating-point identity suite of the spinor algebra.
    VerifyAlgebra,
    /// Evolve the initial data; writes the run table and snapshots.
    Evolve,
    /// Extract the radiation field of the initial data.
    Radiation,
    /// Charge balance, ghost weight and Klainerman–Sobolev tables.
    Diagnostics,
    /// Apply the (linear or nonlinear) forward scattering map.
    ScatterForward,
    /// Invert the forward map on the image of the initial data.
    ScatterInverse,
    /// Refinement ladders with fitted orders and exponents.
    Convergence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyAlgebra => "verify-algebra",
            Command::Evolve => "evolve",
            Command::Radiation => "radiation",
            Command::Diagnostics => "diagnostics",
            Command::ScatterForward => "scatter-forward",
            Command::ScatterInverse => "scatter-inverse",
            Command::Convergence => "convergence",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Config(String),
    /// Numerical failure during a run (exit 1).
    Run(spinrad::Error),
}

impl From<spinrad::Error> for CliError {
    fn from(e: spinrad::Error) -> Self {
        use spinrad::Error as E;
        match e {
            E::InvalidConfig(_)
            | E::InvalidGrid(_)
            | E::Containment(_)
            | E::GridMismatch(_)
            | E::OutsideBox(_)
            | E::TimeOutOfRange { .. }
            | E::Unsupported(_)
            | E::Io(_) => CliError::Config(e.to_string()),
            other => CliError::Run(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.set).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.validate().map_err(CliError::Config)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut out = Output::create(&cfg.out, &cfg, cli.command.name())?;
    println!("{} (config {})", cli.command.name(), &out.hash()[..12]);
    match cli.command {
        Command::VerifyAlgebra => commands::verify_algebra_cmd(&cfg, &mut out)?,
        Command::Evolve => commands::evolve_cmd(&cfg, &mut out)?,
        Command::Radiation => commands::radiation_cmd(&cfg, &mut out)?,
        Command::Diagnostics => commands::diagnostics_cmd(&cfg, &mut out)?,
        Command::ScatterForward => commands::scatter_forward_cmd(&cfg, &mut out)?,
        Command::ScatterInverse => commands::scatter_inverse_cmd(&cfg, &mut out)?,
        Command::Convergence => commands::convergence_cmd(&cfg, &mut out)?,
    }
    Ok(out.finish()?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            for name in failed {
                eprintln!("check failed: {name}");
            }
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("check failed: {e}");
            ExitCode::from(1)
        }
    }
}
