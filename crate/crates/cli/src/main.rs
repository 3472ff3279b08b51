use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cutoff_core::verify::Level;

mod commands;
mod config;
mod svg;

use config::ExperimentConfig;

/// Environment variable read for the worker count when `--threads` is absent.
const THREADS_ENV: &str = "CUTOFF_THREADS";

#[derive(Parser, Debug)]
#[command(name = "cutoff", version, about = "Cutoff-rate bounds and constellation shaping under mixed noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the Monte Carlo cross-check.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: $CUTOFF_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// S2/S3/Z bounds against the oracle over the GSNR grid.
    BoundsSweep,
    /// Cutoff-rate bounds of the configured layout over the GSNR grid.
    CrSweep,
    /// Joint shaping plus the four baselines at every GSNR point.
    Shape,
    /// Regenerate the quadrature fixture table.
    Oracle,
    /// Run the acceptance suite.
    Verify {
        #[arg(long, default_value = "quick")]
        level: String,
    },
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => Ok(Some(v.trim().parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?)),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = threads(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    let files = match cli.command {
        Command::BoundsSweep => commands::bounds_sweep(&cfg)?,
        Command::CrSweep => commands::cr_sweep(&cfg)?,
        Command::Shape => commands::shape(&cfg)?,
        Command::Oracle => commands::oracle(&cfg, cli.seed)?,
        Command::Verify { level } => {
            let level: Level = level.parse()?;
            return Ok(commands::verify(level));
        }
    };
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
