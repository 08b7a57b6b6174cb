//! `pseudospec` command-line driver.
//!
//! Exit codes: 0 success, 1 failed oracle check, 2 configuration or output
//! error, 3 numerical failure (message starts with the error name).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::RunConfig;

/// Environment variable overriding the output directory of the config file.
pub const OUT_ENV: &str = "PSEUDOSPEC_OUT";

#[derive(Parser, Debug)]
#[command(name = "pseudospec", version, about = "Spectra, topological indices and degeneracies of pseudo-Hermitian spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues and indices at the `[point]` of the config, as JSON.
    Spectrum(Common),
    /// Band table of the `[sweep]` grid, as CSV.
    Sweep(Common),
    /// Detected and classified crossings of every sweep, as CSV.
    Crossings(Common),
    /// Diabolical-point lines traced from the crossings at `trace.seed_gamma_tilde`.
    TraceManifold(Common),
    /// Dense diagonalization against the free-fermion solution at random couplings.
    OracleCheck(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; all fields default when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the environment and the config file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid-point parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Seed of the random samples of `oracle-check`.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Spectrum(c) => ("spectrum", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Crossings(c) => ("crossings", c),
        Command::TraceManifold(c) => ("trace-manifold", c),
        Command::OracleCheck(c) => ("oracle-check", c),
    };
    let mut cfg = RunConfig::load(common.config.as_deref()).map_err(|e| CliError::Config(e.0))?;
    if let Some(dir) = common.out.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)) {
        cfg.output.dir = dir;
    }
    if let Some(seed) = common.seed {
        cfg.oracle.seed = seed;
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    commands::prepare_output(&cfg, name)?;
    match cli.command {
        Command::Spectrum(_) => commands::spectrum(&cfg),
        Command::Sweep(_) => commands::sweep(&cfg),
        Command::Crossings(_) => commands::crossings(&cfg),
        Command::TraceManifold(_) => commands::trace_manifold(&cfg),
        Command::OracleCheck(_) => commands::oracle_check(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
