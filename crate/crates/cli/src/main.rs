use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sdl_cli::{execute, parse_config, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "sdl", version, about = "Large-batch SGD diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Small-batch training with weight-distance logging and fits
    Train(Common),
    /// The SB / LB / +LR / +GBN / +RA ladder
    Ablate(Common),
    /// Gradient-covariance formulas against enumeration and Monte Carlo
    CovVerify(Common),
    /// Random walks on random potentials
    Walk(Common),
    /// Loss statistics along random rays from initialization
    RayScan(Common),
    /// Gradient descent on separable logistic regression
    Logistic(Common),
    /// Fits of a saved distance series
    Fit(Common),
    /// Rebuild ladder tables and charts from an output directory
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit
    #[arg(long)]
    print_defaults: bool,
}

impl Command {
    fn split(self) -> (Experiment, Common) {
        match self {
            Command::Train(c) => (Experiment::Train, c),
            Command::Ablate(c) => (Experiment::Ablate, c),
            Command::CovVerify(c) => (Experiment::CovVerify, c),
            Command::Walk(c) => (Experiment::Walk, c),
            Command::RayScan(c) => (Experiment::RayScan, c),
            Command::Logistic(c) => (Experiment::Logistic, c),
            Command::Fit(c) => (Experiment::Fit, c),
            Command::Report(c) => (Experiment::Report, c),
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("SDL_THREADS") {
        let threads: usize = value
            .parse()
            .with_context(|| format!("SDL_THREADS must be a positive integer, got `{value}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (experiment, common) = cli.command.split();
    let mut cfg = match &common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::defaults(experiment),
    };
    cfg.experiment = experiment;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = common.out {
        cfg.out = out;
    }
    cfg.validate()?;
    if common.print_defaults {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    configure_threads()?;
    let files = execute(&cfg)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
