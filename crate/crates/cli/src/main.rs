//! `meshfl`: network simulation, closed-form analysis, federated training,
//! compression, parameter sweeps and reports.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod chart;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, compress, netsim, report, sweep, train};

#[derive(Debug, Parser)]
#[command(name = "meshfl", version, about = "Wireless mesh simulation and federated learning")]
struct Cli {
    /// Master seed; overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "MESHFL_THREADS")]
    threads: Option<usize>,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo success probability over a threshold grid.
    Netsim(netsim::Args),
    /// Closed-form success probability and Poisson count law.
    Analyze(analyze::Args),
    /// Centralized or decentralized federated training.
    Train(train::Args),
    /// Expand a config template over a parameter grid.
    Sweep(sweep::Args),
    /// Genetic hidden-unit pruning of a trained MLP.
    Compress(compress::Args),
    /// Compare finished training runs.
    Report(report::Args),
}

/// Invalid input from the user: bad flags, unreadable or inconsistent
/// configuration. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub struct Globals {
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<meshfl::Error>() {
            return match e {
                meshfl::Error::InvalidParameter(_)
                | meshfl::Error::Domain(_)
                | meshfl::Error::DimensionMismatch { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let globals = Globals {
        seed: cli.seed,
        out: cli.out,
        config: cli.config,
    };
    let result = match cli.command {
        Command::Netsim(a) => netsim::run(&globals, a),
        Command::Analyze(a) => analyze::run(&globals, a),
        Command::Train(a) => train::run(&globals, a),
        Command::Sweep(a) => sweep::run(&globals, a),
        Command::Compress(a) => compress::run(&globals, a),
        Command::Report(a) => report::run(&globals, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
