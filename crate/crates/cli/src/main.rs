//! Command-line front end for the MPC Newton-step solvers.
//!
//! Exit codes: 0 success, 1 usage error, 2 file parse error, 3 validation
//! failure, 4 solver failure, 5 tolerance exceeded.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_SOLVE: u8 = 4;
pub const EXIT_TOLERANCE: u8 = 5;

#[derive(Parser)]
#[command(
    name = "parmpc",
    about = "Newton-step solvers for equality-constrained MPC problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random stable problem and write it as JSON
    Generate(GenerateArgs),
    /// Solve a problem file and report residual and objective
    Solve(SolveArgs),
    /// Benchmark the tree solver against the serial Riccati baseline
    Bench(BenchArgs),
    /// Run the invariant suite on a problem file
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// State dimension
    #[arg(long, default_value_t = 4)]
    pub nx: usize,
    /// Input dimension
    #[arg(long, default_value_t = 2)]
    pub nu: usize,
    /// Prediction horizon
    #[arg(long = "N", default_value_t = 16)]
    pub horizon: usize,
    /// Spectral-norm bound on every transition matrix
    #[arg(long, default_value_t = 0.95)]
    pub spectral_bound: f64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem file (JSON)
    pub problem: PathBuf,
    /// Solver: tree | riccati | oracle
    #[arg(long, default_value = "tree")]
    pub solver: String,
    /// Block length per reduction level
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    /// Stop reducing at this horizon
    #[arg(long = "p-min", default_value_t = 1)]
    pub p_min: usize,
    /// Worker threads for block loops (0 = all cores)
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Acceptable KKT residual
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Write the solution JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub nx: usize,
    #[arg(long, default_value_t = 10)]
    pub nu: usize,
    /// Horizon; repeat the flag for a sweep (--N 64 --N 128 ...)
    #[arg(long = "N", required = true)]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    #[arg(long = "p-min", default_value_t = 1)]
    pub p_min: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Repetitions per horizon, averaged
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0.95)]
    pub spectral_bound: f64,
    /// CSV output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Problem file (JSON)
    pub problem: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    #[arg(long = "p-min", default_value_t = 1)]
    pub p_min: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are not usage errors
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let code = match cli.command {
        Command::Generate(args) => commands::generate(&args),
        Command::Solve(args) => commands::solve(&args),
        Command::Bench(args) => commands::bench(&args),
        Command::Verify(args) => commands::verify(&args),
    };
    match code {
        0 => ExitCode::SUCCESS,
        c => ExitCode::from(c),
    }
}
