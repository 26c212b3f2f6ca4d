//! `agebranch`: simulate genealogies, estimate division rates, verify
//! many-to-one identities and run replicated studies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "agebranch", version, about = "Age-dependent branching: simulation and rate estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed override; wins over the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Model preset ("paper-trial", "constant b=0.4 m=2") or experiment
    /// preset ("desk", "full-paper").
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// More progress output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Simulate one tree and dump it as CSV.
    Simulate,
    /// Estimate the division rate from one tree.
    Estimate,
    /// Monte-Carlo check of the many-to-one identities.
    Verify,
    /// Replicated estimation study.
    Experiment,
    /// Print the Malthus parameter and related constants.
    ModelInfo,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match config::resolve(cli.config.as_deref(), cli.preset.as_deref(), cli.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli, &cfg) {
        Ok(commands::Outcome::Passed) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Failed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            let err = serde_json::json!({ "error": e.to_string(), "command": format!("{:?}", cli.command) });
            eprintln!("{err}");
            ExitCode::from(1)
        }
    }
}
