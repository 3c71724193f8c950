//! `rul`: prepare, train, evaluate, analyze and synthesize C-MAPSS-format
//! RUL experiments.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure.

mod cache;
mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rul_core::experiment::ModelKind;
use rul_core::{RulError, SubsetId};

use config::{ExperimentConfig, Overrides};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<RulError> for CliError {
    fn from(e: RulError) -> Self {
        match e {
            RulError::Numeric(_) | RulError::Solver(_) => CliError::Numeric(e.to_string()),
            RulError::ModelType(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "rul", version, about = "Remaining-useful-life experiments on C-MAPSS-format data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML experiment config; flags below override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// FD001, FD003 or SYNTH.
    #[arg(long)]
    subset: Option<SubsetId>,
    /// raw_ridge, ridge_fe, poly_ridge, gbdt, cnn or lstm.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory with the data files (falls back to CMAPSS_DATA_ROOT).
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    max_rul: Option<u32>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let o = Overrides {
            subset: self.subset,
            model: self.model,
            seed: self.seed,
            data_root: self.data_root.clone(),
            out: self.out.clone(),
            max_rul: self.max_rul,
            max_epochs: self.max_epochs,
        };
        ExperimentConfig::load(self.config.as_deref())?.resolve(&o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Window, scale and cache the dataset.
    Prepare(Common),
    /// Fit the configured model and save it.
    Train(Common),
    /// Score a saved model on the test engines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file; defaults to the one `train` writes.
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
    /// Hidden-state trace and sequence-length ablation for an LSTM.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Training engine to trace; defaults to the first long enough.
        #[arg(long)]
        engine: Option<u32>,
        #[arg(long, default_value_t = commands::TRACE_WINDOWS)]
        windows: usize,
    },
    /// Write a synthetic dataset in C-MAPSS text format.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Target directory; defaults to the output directory.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Prepare(c) => commands::prepare(&c.resolve()?),
        Command::Train(c) => commands::train(&c.resolve()?),
        Command::Evaluate { common, model_file } => commands::evaluate_cmd(&common.resolve()?, model_file.as_deref()),
        Command::Analyze { common, checkpoint, engine, windows } => {
            if windows == 0 {
                return Err(CliError::Usage("--windows must be positive".into()));
            }
            commands::analyze(&common.resolve()?, checkpoint.as_deref(), engine, windows)
        }
        Command::Synth { common, dir } => {
            let cfg = common.resolve()?;
            let dir = dir.unwrap_or_else(|| cfg.out.clone());
            commands::synth(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("rul: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
