//! Command line front end for `spde_lab`: config parsing, command drivers and
//! report writing.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{run_command, Command};
pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spde-lab", version, about = "Reflected SPDE coupling and log-Harnack laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,

    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed, overriding `mc.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for Monte Carlo fan-out (results do not depend on it).
    #[arg(long, global = true, env = "SPDE_LAB_THREADS")]
    pub threads: Option<usize>,

    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CliCommand {
    /// Model constants, r(N) table, min N and Harnack coefficients.
    Constants,
    /// One reflected path.
    Simulate,
    /// One coupled pair with its Girsanov weight.
    Couple,
    /// Monte Carlo verification suites.
    Verify,
    /// Verification over a grid of (N, nu, theta, sigma rank).
    Sweep,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Self {
        match c {
            CliCommand::Constants => Command::Constants,
            CliCommand::Simulate => Command::Simulate,
            CliCommand::Couple => Command::Couple,
            CliCommand::Verify => Command::Verify,
            CliCommand::Sweep => Command::Sweep,
        }
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match try_run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_run(cli: &Cli) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["--config PATH is required".into()]))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.mc.master_seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    run_command(cli.command.into(), &cfg, cli.threads.unwrap_or(0), &out)
}
