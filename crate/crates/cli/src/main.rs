//! `hazscreen`: screening, fitting and simulation runs from the command line.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, FitArgs, IsisArgs, SimulateArgs, SisArgs};

/// Feature screening and selection for right-censored survival data.
#[derive(Debug, Parser)]
#[command(name = "hazscreen", version, about)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "HAZSCREEN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank features by a marginal FAST statistic.
    Sis(SisArgs),
    /// Iterated screening with penalized selection.
    Isis(IsisArgs),
    /// Fit the additive hazards model on a feature subset.
    Fit(FitArgs),
    /// Run a simulation protocol and report screening metrics.
    Simulate(SimulateArgs),
    /// Time the marginal statistics on a simulated dataset.
    Bench(BenchArgs),
}

/// Exit status for invalid input or usage.
const EXIT_INPUT: u8 = 2;
/// Exit status for numerical failures (singular systems, non-convergence).
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not configure the thread pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let threads = rayon::current_num_threads();
    let result = match cli.command {
        Command::Sis(a) => commands::sis(a, threads),
        Command::Isis(a) => commands::isis(a, threads),
        Command::Fit(a) => commands::fit(a, threads),
        Command::Simulate(a) => commands::simulate(a, threads),
        Command::Bench(a) => commands::bench(a, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}
