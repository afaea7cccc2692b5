// NaN-rejecting range checks read as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::LambdaSpec;

/// Kernel-based impulse-response identification.
#[derive(Debug, Parser)]
#[command(name = "ksid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a system and write input, dataset and true impulse response.
    Simulate(Common),
    /// Fit an impulse response to a dataset.
    Identify(Common),
    /// Run numerical checks on a kernel.
    Verify(Common),
    /// List kernel families and their hyperparameters.
    Kernels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Tc,
    Dc,
    Ss,
    Constant,
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Discrete,
    Continuous,
}

/// Flags shared by the run commands; they override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: Option<u64>,
    /// A value, a comma list, or `log:LO:HI:COUNT`.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<LambdaSpec>,
    #[arg(long, value_enum)]
    pub kernel: Option<FamilyArg>,
    #[arg(long, value_enum)]
    pub domain: Option<DomainArg>,
    /// TC / SS decay rate.
    #[arg(long)]
    pub beta: Option<f64>,
    /// DC diagonal decay.
    #[arg(long)]
    pub decay: Option<f64>,
    /// DC correlation.
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    /// Constant kernel value.
    #[arg(long)]
    pub value: Option<f64>,
    /// Tabulated kernel CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files (exit 2).
    Config(String),
    /// A verification check failed (exit 1).
    Check(String),
    /// Divergence or solver failure (exit 3).
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "error: {m}"),
            CliError::Check(m) => write!(f, "check failure: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<kernel_sysid::Error> for CliError {
    fn from(e: kernel_sysid::Error) -> Self {
        use kernel_sysid::Error as E;
        match e {
            E::DivergenceSuspected { .. } | E::NumericalFailure(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Identify(c) => commands::identify(c),
        Command::Verify(c) => commands::verify(c),
        Command::Kernels => {
            commands::kernels();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
