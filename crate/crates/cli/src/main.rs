use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "degdiff", version, about = "Degenerate nonlinear diffusion: solver, particle simulator and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a run configuration and write its artifact tree.
    Run {
        /// TOML run configuration.
        config: PathBuf,
        /// Override the particle seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve on a doubling refinement ladder and tabulate errors against
    /// a closed-form reference solution.
    Compare {
        config: PathBuf,
        /// Reference solution: heat | barenblatt | stationary.
        #[arg(long)]
        oracle: String,
        /// Ladder height (each rung doubles cells and steps).
        #[arg(long, default_value_t = 3)]
        rungs: usize,
    },
    /// Recompute snapshot statistics from a written artifact tree and
    /// re-check the invariants.
    Diagnose {
        /// Directory created by `run`.
        artifact_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(passed) => {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, seed } => {
            let outcome = degdiff::run(&config, seed)?;
            println!("artifacts: {}", outcome.out_dir.display());
            if outcome.passed {
                println!("invariants: pass");
            } else {
                println!("invariants: FAIL");
                for v in &outcome.violations {
                    println!("  {v}");
                }
            }
            Ok(outcome.passed)
        }
        Command::Compare { config, oracle, rungs } => {
            let table = degdiff::compare(&config, &oracle, rungs)?;
            println!("oracle: {}", table.oracle);
            for rung in &table.rungs {
                println!(
                    "cells={:6} steps={:6} final L1 error={:.6e}",
                    rung.cells, rung.steps, rung.final_l1
                );
            }
            for (k, order) in table.observed_orders.iter().enumerate() {
                println!("order {} -> {}: {:.3}", k, k + 1, order);
            }
            Ok(true)
        }
        Command::Diagnose { artifact_dir } => {
            let report = degdiff::diagnose(&artifact_dir)?;
            for row in &report.rows {
                println!(
                    "{}: t={} mass={:.12} linf={:.6} tv={:.6} min={:.3e}",
                    row.file, row.t, row.mass, row.linf, row.total_variation, row.min_u
                );
            }
            if report.passed {
                println!("diagnose: pass");
            } else {
                println!("diagnose: FAIL");
                for v in &report.violations {
                    println!("  {v}");
                }
            }
            Ok(report.passed)
        }
    }
}
