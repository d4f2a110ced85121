//! `spinsys`: run spin-system experiments from TOML configuration files.
//!
//! Exit codes: 0 success, 1 invariant violation (counterexample on stderr),
//! 2 hypothesis rejection (unbounded rates or divergent influence),
//! 3 configuration or usage error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinsys_core::SpinError;

#[derive(Parser, Debug)]
#[command(
    name = "spinsys",
    version,
    about = "Spin-system simulation and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output file; defaults to stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the configured replica count.
    #[arg(long)]
    pub replicas: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One finite-system trajectory on the active box.
    Simulate(Common),
    /// Agreement of the coupled box processes with the largest box at the probe.
    Converge(Common),
    /// Per-sample and statistical duality of the invasion process.
    Duality(Common),
    /// Mean weighted size of the transposed invasion against its envelope.
    Growth(Common),
    /// Monte Carlo difference quotients against the generator.
    GeneratorCheck(Common),
    /// Integral of the generator against a measure.
    InvariantCheck(Common),
    /// Weighted influence norm of the semigroup against its envelope.
    NormGrowth(Common),
    /// The standard verification suite, plus model checks when a config is given.
    VerifyAll(VerifyArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// JSON manifest path; defaults to stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Run at a tenth of the replica counts.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    seed: Option<u64>,
}

/// How a command ended when it did not succeed.
#[derive(Debug)]
pub enum Failure {
    Violation {
        message: String,
        counterexample: serde_json::Value,
    },
    Error(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

impl From<SpinError> for Failure {
    fn from(e: SpinError) -> Self {
        Failure::Error(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn exit_code_of(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<SpinError>() {
        Some(s) if s.is_hypothesis_violation() => 2,
        Some(SpinError::MarkOverflow { .. }) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(c) => commands::simulate(&c),
        Command::Converge(c) => commands::converge(&c),
        Command::Duality(c) => commands::duality(&c),
        Command::Growth(c) => commands::growth(&c),
        Command::GeneratorCheck(c) => commands::generator_check(&c),
        Command::InvariantCheck(c) => commands::invariant_check(&c),
        Command::NormGrowth(c) => commands::norm_growth(&c),
        Command::VerifyAll(v) => {
            commands::verify_all(v.config.as_deref(), v.out.as_deref(), v.quick, v.seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation {
            message,
            counterexample,
        }) => {
            eprintln!("violation: {message}");
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&counterexample).unwrap_or_default()
            );
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            let code = exit_code_of(&e);
            match code {
                2 => eprintln!("hypothesis rejected: {e:#}"),
                _ => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code)
        }
    }
}
