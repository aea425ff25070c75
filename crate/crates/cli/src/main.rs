mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Adaptive iteratively linearized finite elements for quasi-linear
/// elliptic benchmarks.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one adaptive computation; writes history.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a theta x lambda_lin grid; writes sweep.csv and sweep.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the invariant checks at small scale.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => commands::cmd_run(&config).map(|s| {
            println!(
                "{} {}: {:?}, eta {:.4e}, dofs {}, {} levels, {} steps",
                s.problem,
                s.method,
                s.termination,
                s.final_eta.unwrap_or(f64::NAN),
                s.final_dofs.unwrap_or(0),
                s.levels,
                s.total_steps
            );
        }),
        Command::Sweep { config } => commands::cmd_sweep(&config).map(|s| {
            if let Some((theta, lambda, metric)) = s.best {
                println!("best cell: theta {theta}, lambda_lin {lambda}, metric {metric:.4e}");
            }
        }),
        Command::Verify { seed } => commands::cmd_verify(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
