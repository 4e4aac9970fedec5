//! `acopf`: validate cases, solve power flow or OPF, generate datasets, train
//! surrogates, benchmark warm starts and summarize reports.
//!
//! Exit status: 0 success, 1 domain failure, 2 usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "acopf", version, about = "AC optimal power flow data generation and surrogate training")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (1 gives bit-reproducible output).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pf,
    Opf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    E2e,
    Constraints,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a case file and check its structure.
    Validate { case: String },
    /// Solve a case and print the solution as JSON.
    Solve {
        case: String,
        #[arg(long, value_enum, default_value = "opf")]
        mode: Mode,
        /// Convergence tolerance (mismatch for pf, KKT residual for opf).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Sample load profiles, solve them and write a dataset directory.
    Generate { config: PathBuf },
    /// Run a grid search for one task and write models and reports.
    Train {
        config: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
    },
    /// Pair cold and warm-started OPF solves on the held-out split.
    BenchWarmstart {
        config: PathBuf,
        /// Trained constraint model; omit with --oracle, --zeros or --random.
        model: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["zeros", "random", "model"])]
        oracle: bool,
        #[arg(long, conflicts_with_all = ["random", "model"])]
        zeros: bool,
        #[arg(long, conflicts_with = "model")]
        random: bool,
    },
    /// Summarize the JSON reports in a directory.
    Report { dir: PathBuf },
}

/// Failure carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Domain(_) => 1,
            Self::Usage(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Domain(m) | Failure::Usage(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
