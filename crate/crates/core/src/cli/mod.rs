//! Experiment configuration and the runners behind the `qfl` binary.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ConfigError, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
    #[error(transparent)]
    Fed(#[from] crate::fed::FedError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfl", version, about = "Quantum federated learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Use the full 5000/10000 train/test split.
    #[arg(long, global = true)]
    pub paper_scale: bool,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write train/test CSVs and the client partition.
    GenData,
    /// Raw vs ZNE fractional gradient error across noise levels.
    BiasSweep,
    /// FedAvg, SCAFFOLD and Q-ANCHOR on the quantum classifier.
    FlCompare,
    /// Gradient variance and cost against shot count.
    ShotSweep,
    /// Synthetic error-floor sweep.
    SynthFloor,
}

impl Cli {
    /// Loads the config file (or defaults) and applies command-line overrides.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.experiment.out_dir = out.clone();
        }
        if let Some(w) = self.workers {
            cfg.experiment.workers = w;
        }
        if self.paper_scale {
            cfg.apply_paper_scale();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.experiment.workers > 0 {
        if let Err(e) = crate::exec::set_workers(cfg.experiment.workers) {
            log::warn!("worker pool already configured: {e}");
        }
    }
    match command {
        Command::GenData => run::run_gen_data(cfg).map(drop),
        Command::BiasSweep => run::run_bias_sweep(cfg).map(drop),
        Command::FlCompare => run::run_fl_compare(cfg).map(drop),
        Command::ShotSweep => run::run_shot_sweep(cfg).map(drop),
        Command::SynthFloor => run::run_synth_floor(cfg).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.resolve_config().map_err(CliError::from).and_then(|cfg| {
        log::info!("writing {:?} output to {}", cli.command, cfg.experiment.out_dir.display());
        run(cli.command, &cfg)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
