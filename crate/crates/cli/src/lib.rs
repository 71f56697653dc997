//! Command-line surface tying generation, training, tokenization, and
//! evaluation into reproducible runs.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use phaedra_core::CoreError;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "phaedra", version, about = "Dual-latent discrete tokenizer for 2D scientific fields")]
pub struct Cli {
    /// Master seed for anything stochastic in the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Force fully sequential execution (equivalent to --threads 1).
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (shards plus manifest).
    Gen {
        /// gaussians | sines | quadrants | multiscale
        #[arg(long)]
        family: String,
        /// Total sample count (train split = count - val - test).
        #[arg(long)]
        count: usize,
        #[arg(long)]
        resolution: usize,
        #[arg(long, default_value_t = 0)]
        val: usize,
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// Train a tokenizer on one or more datasets.
    Train {
        /// Dataset directories (repeatable).
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        /// Override any config key, e.g. --set steps=2000 (repeatable).
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Encode a dataset split into token files.
    Tokenize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Decode token files back into reconstruction shards.
    Detokenize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        tokens: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split; writes the metric report.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Merge evaluation reports into one comparison table.
    Report {
        /// Eval output directories (repeatable).
        #[arg(long, required = true)]
        inputs: Vec<PathBuf>,
        /// Also copy per-wavenumber spectrum dumps into the report.
        #[arg(long)]
        spectra: bool,
    },
}

/// Resolved global options shared by every command.
pub struct Globals {
    pub seed: u64,
    pub threads: usize,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn classify_core(e: &CoreError) -> i32 {
    use phaedra_core::error::CoreError as E;
    use phaedra_tensor::TensorError as TE;
    match e {
        E::NanLoss { .. } | E::NanGrad { .. } | E::NonFiniteLatent | E::NonFiniteField => 3,
        E::Tensor(TE::NonFinite { .. }) | E::Tensor(TE::NonFiniteInput { .. }) => 3,
        E::Config(_)
        | E::Generator(_)
        | E::InvalidLevels(_)
        | E::InvalidScale(_)
        | E::Resolution { .. } => 1,
        _ => 2,
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        // Core errors keep their class through anyhow; anything else is a
        // usage problem from argument/config handling unless io-flavored.
        if let Some(core) = e.downcast_ref::<CoreError>() {
            let msg = format!("{core}");
            return match classify_core(core) {
                1 => CliError::Usage(msg),
                3 => CliError::Numerical(msg),
                _ => CliError::Data(msg),
            };
        }
        if e.downcast_ref::<std::io::Error>().is_some() {
            return CliError::Data(format!("{e:#}"));
        }
        CliError::Usage(format!("{e:#}"))
    }
}

/// Parse and execute; the embedding-friendly entry point.
pub fn run<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let threads = if cli.deterministic {
        1
    } else {
        cli.threads.unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
    };
    let out = cli
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let globals = Globals { seed: cli.seed, threads, config: cli.config.clone(), out };

    match cli.command {
        Command::Gen { family, count, resolution, val, test } => {
            commands::gen::run(&globals, &family, count, resolution, val, test).map_err(Into::into)
        }
        Command::Train { data, overrides } => {
            commands::train::run(&globals, &data, &overrides).map_err(Into::into)
        }
        Command::Tokenize { checkpoint, data, split } => {
            commands::tokenize::run_tokenize(&globals, &checkpoint, &data, &split).map_err(Into::into)
        }
        Command::Detokenize { checkpoint, tokens } => {
            commands::tokenize::run_detokenize(&globals, &checkpoint, &tokens).map_err(Into::into)
        }
        Command::Eval { checkpoint, data, split } => {
            commands::eval::run(&globals, &checkpoint, &data, &split).map_err(Into::into)
        }
        Command::Report { inputs, spectra } => {
            commands::report::run(&globals, &inputs, spectra).map_err(Into::into)
        }
    }
}
