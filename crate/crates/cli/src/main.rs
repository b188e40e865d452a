mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

/// Optimal Shewhart change detection for hidden Markov models.
#[derive(Parser, Debug)]
#[command(name = "hmmcd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate both tests and solve the worst-case prior for each gamma.
    Calibrate(commands::CalibrateArgs),
    /// Write the detection-probability curves as CSV.
    Figure1(commands::Figure1Args),
    /// Monte-Carlo run length, worst-case detection and equalizer estimates.
    Simulate(commands::SimulateArgs),
    /// Run the verification corpus; exit 1 if any check fails.
    Verify(commands::VerifyArgs),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Figure1(a) => commands::figure1(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hmmcd: {e}");
            ExitCode::from(e.code())
        }
    }
}
