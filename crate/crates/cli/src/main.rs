use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvar_nash_cli::experiment::format_bounds;
use cvar_nash_cli::{load_config, report, run_experiment, RunOptions};

#[derive(Parser)]
#[command(
    name = "cvar-nash",
    version,
    about = "Risk-averse Nash equilibrium learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its output bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Exit with status 2 if any bound check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Check a config and print it with all defaults filled in.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the bound report of an existing bundle from its traces.
    Report {
        #[arg(long)]
        bundle: PathBuf,
    },
}

fn main() -> ExitCode {
    match try_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            workers,
            strict,
        } => {
            if workers == Some(0) {
                anyhow::bail!("--workers must be >= 1");
            }
            let cfg = load_config(&config)?;
            let bundle = run_experiment(
                &cfg,
                &RunOptions {
                    out,
                    workers,
                    progress: true,
                },
            )?;
            eprint!("{}", format_bounds(&bundle.bounds));
            eprintln!("wrote {}", bundle.dir.display());
            Ok(if strict && !bundle.all_bounds_pass() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Validate { config } => {
            print!("{}", load_config(&config)?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { bundle } => {
            print!("{}", format_bounds(&report(&bundle)?));
            Ok(ExitCode::SUCCESS)
        }
    }
}
