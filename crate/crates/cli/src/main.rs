//! `lqlab`: runs configured inequality checks and writes report tables.
//!
//! Exit codes: 0 when no hard assertion fails, 1 on a failed check, 2 on an
//! invalid config, 3 on resource errors (atom budget, convergence, I/O).
//! `LQLAB_THREADS` sizes the work pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqlab::inequality::Status;

use lqlab_cli::config::{self, Category, Format, SamplingMode};
use lqlab_cli::emit;
use lqlab_cli::runner::{self, RunError};

#[derive(Debug, Parser)]
#[command(name = "lqlab", version, about = "Exact and sampled checks of Rosenthal-type inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Centered Poisson moments.
    Moments(RunArgs),
    /// Rosenthal, symmetrization, Hoffmann-Jorgensen and sequence-norm checks.
    Rosenthal(RunArgs),
    /// Stochastic integrals: decoupling, isomorphism ratios, Doob.
    Integral(RunArgs),
    /// Operator-norm bounds for random matrices.
    Matrix(RunArgs),
    /// Khintchine, Kahane, type and cotype.
    Khintchine(RunArgs),
    /// Every check in the config.
    Suite(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, value_enum)]
    mode: Option<SamplingMode>,
}

fn configure_pool() -> Result<(), RunError> {
    let Ok(value) = std::env::var("LQLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().map_err(|_| RunError::Config(format!("LQLAB_THREADS={value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| RunError::Resource(e.to_string()))
}

fn execute(filter: Option<Category>, args: &RunArgs) -> Result<bool, RunError> {
    configure_pool()?;
    let mut cfg = config::load(&args.config).map_err(RunError::Config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.run.mode = mode;
    }
    let format = args.format.unwrap_or(cfg.output.format);
    let path = args.out.clone().or(cfg.output.path.clone());
    let reports = runner::run(&cfg.checks, filter, &cfg.run)?;
    let bytes = emit::render(&reports, format).map_err(RunError::Resource)?;
    emit::write(&bytes, path.as_deref()).map_err(|e| RunError::Resource(format!("cannot write report: {e}")))?;
    Ok(reports.iter().all(|r| r.status != Status::Fail))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (filter, args) = match &cli.command {
        Command::Moments(a) => (Some(Category::Moments), a),
        Command::Rosenthal(a) => (Some(Category::Rosenthal), a),
        Command::Integral(a) => (Some(Category::Integral), a),
        Command::Matrix(a) => (Some(Category::Matrix), a),
        Command::Khintchine(a) => (Some(Category::Khintchine), a),
        Command::Suite(a) => (None, a),
    };
    match execute(filter, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("lqlab: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
