use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsise::commands::{execute, Command, Options};
use qsise::exec::{default_threads, THREADS_ENV};

#[derive(Parser)]
#[command(
    name = "qsise",
    version,
    about = "Input and state estimation from quantized outputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every configured estimator on one seeded realization.
    Filter(Args),
    /// Paired Monte Carlo over the configured step sizes.
    Sweep(Args),
    /// Check filter invariants on the configured model.
    Verify(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N", env = THREADS_ENV, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Filter(a) => (Command::Filter, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Verify(a) => (Command::Verify, a),
    };
    let opts = Options {
        config: args.config,
        out: args.out,
        seed: args.seed,
        threads: args.threads.map_or_else(default_threads, |n| n as usize),
    };
    match execute(command, &opts) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("qsise: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
