//! `boundopt`: data generation, NMF benchmarks, the saddle experiment and
//! single solver runs. Every run writes CSV traces plus a `run.toml`
//! snapshot of the arguments and the full configuration.

mod commands;
mod config;
mod error;
mod output;
mod runs;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Common, GenDataArgs, NmfBenchArgs, SaddleArgs, SolveArgs};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "boundopt", version, about = "Bound-constrained nonconvex optimization driver")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic NMF instance: V.csv, W.csv, Y.csv and meta.toml.
    GenData(GenDataArgs),
    /// Run solvers on NMF scenarios from shared starting points and write summary.csv.
    NmfBench(NmfBenchArgs),
    /// Start PNCG and projected gradient from a rank-deficient saddle point.
    Saddle(SaddleArgs),
    /// Run one solver on one problem.
    Solve(SolveArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a, &cli.common),
        Command::NmfBench(a) => {
            let failures = commands::nmf_bench(a, &cli.common)?;
            if failures > 0 {
                eprintln!("{failures} run(s) failed; see summary.csv");
                return Err(CliError::NotConverged {
                    solver: "nmf-bench",
                    status: "error",
                });
            }
            Ok(())
        }
        Command::Saddle(a) => commands::saddle(a, &cli.common),
        Command::Solve(a) => commands::solve(a, &cli.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
