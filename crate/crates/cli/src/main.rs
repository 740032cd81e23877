//! Experiment runner for the harmonic-map pipeline.
//!
//! Exit codes: 0 success, 2 configuration errors, 3 resolution errors,
//! 4 solver errors, 5 certification failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ahhm_core::Error;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "ahhm", about = "Harmonic-map slab experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel moments and bound constants over a radius ladder.
    KernelCheck,
    /// Build the approximate solution and report tension and Neumann data.
    BuildApprox,
    /// Flow the approximate solution to a harmonic map.
    Solve,
    /// Truncated-domain exhaustion study.
    Exhaust,
    /// Solve and certify the superharmonic barrier.
    Barrier,
    /// Distance and comparison-bound diagnostics.
    Compare,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Format(_) => 2,
        Error::Resolution(_) | Error::InsufficientLevels(_) => 3,
        Error::Certification { .. } => 5,
        Error::Io(_) => 1,
        _ => 4,
    }
}

fn run(cli: &Cli) -> ahhm_core::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::KernelCheck => commands::cmd_kernel_check(&cfg, out),
        Command::BuildApprox => commands::cmd_build_approx(&cfg, out),
        Command::Solve => commands::cmd_solve(&cfg, out),
        Command::Exhaust => commands::cmd_exhaust(&cfg, out),
        Command::Barrier => commands::cmd_barrier(&cfg, out),
        Command::Compare => commands::cmd_compare(&cfg, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
