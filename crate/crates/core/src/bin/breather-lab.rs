use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use breather_lab::config::{ExperimentConfig, ExperimentKind};
use breather_lab::runner::{run_experiment, RunOptions};
use breather_lab::{Error, Result};

const THREADS_ENV: &str = "BREATHER_LAB_THREADS";

#[derive(Parser)]
#[command(name = "breather-lab", version, about = "Random breather Schrödinger operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues of sampled Hamiltonians
    Spectrum(Flags),
    /// Unique-continuation constants and their (κ, M) fit
    Ucp(Flags),
    /// Eigenvalue lifting under ω → ω + δ
    Lifting(Flags),
    /// Spectral shift function checks
    Ssf(Flags),
    /// Monte Carlo Wegner estimate
    Wegner(Flags),
    /// Integrated density of states across box sizes
    Ids(Flags),
}

#[derive(Args)]
struct Flags {
    /// Experiment TOML
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides run.out_dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides run.master_seed)
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Worker threads (overrides run.threads and BREATHER_LAB_THREADS)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Flags) {
        match self {
            Command::Spectrum(f) => (ExperimentKind::Spectrum, f),
            Command::Ucp(f) => (ExperimentKind::Ucp, f),
            Command::Lifting(f) => (ExperimentKind::Lifting, f),
            Command::Ssf(f) => (ExperimentKind::Ssf, f),
            Command::Wegner(f) => (ExperimentKind::Wegner, f),
            Command::Ids(f) => (ExperimentKind::Ids, f),
        }
    }
}

fn env_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config {
            key: THREADS_ENV.into(),
            message: format!("expected a nonnegative integer, got `{v}`"),
        }),
        Err(_) => Ok(None),
    }
}

fn run(command: Command) -> Result<PathBuf> {
    let (kind, flags) = command.split();
    let mut cfg = ExperimentConfig::from_path(&flags.config)?;
    match cfg.experiment.kind {
        Some(k) if k != kind => {
            return Err(Error::Config {
                key: "experiment.kind".into(),
                message: format!("config is for `{}` but `{}` was requested", k.name(), kind.name()),
            })
        }
        _ => cfg.experiment.kind = Some(kind),
    }
    if let Some(seed) = flags.seed {
        cfg.run.master_seed = seed;
    }
    let threads = match flags.threads.or(cfg.run.threads) {
        Some(t) => t,
        None => env_threads()?.unwrap_or(0),
    };
    cfg.run.threads = None;
    let out_dir = flags.out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
    cfg.validate()?;
    run_experiment(&cfg, &RunOptions { out_dir: out_dir.clone(), threads })?;
    Ok(out_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
