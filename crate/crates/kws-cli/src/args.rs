//! Command-line surface: six subcommands plus global flags that override
//! config-file values.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use kws_core::model::KwtVariant;
use kws_core::TrainingMethod;

#[derive(Debug, Parser)]
#[command(
    name = "kws",
    version,
    about = "Noise-robust keyword spotting: data prep, self-supervised pretraining, \
             fine-tuning, evaluation, and reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file (TOML; .json is also accepted).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Training method (baseline-clean, baseline-mtr, d2v-clean,
    /// d2v-clean+noisy, d2v-noisy, d2v-denoising).
    #[arg(long, global = true)]
    pub method: Option<TrainingMethod>,

    /// Model size (kwt1, kwt2, kwt3, kwt-tiny).
    #[arg(long, global = true)]
    pub model: Option<KwtVariant>,

    /// Master seed (the KWS_SEED environment variable overrides this too).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker-pool cap; 0 or absent lets the runtime decide.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Exact run directory (default: a timestamped directory under out_root).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Single-threaded stepping for bit-identical re-runs.
    #[arg(long, global = true)]
    pub deterministic: bool,

    /// Allow overwriting files in an existing run directory.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the dataset manifest, splits, and the 43 test suites.
    PrepareData,
    /// Self-supervised pretraining for the configured method.
    Pretrain,
    /// Supervised training: from scratch for baselines, fine-tuning otherwise.
    Train,
    /// Score a checkpoint on every test suite.
    Evaluate,
    /// Merge evaluate outputs into CSV/JSON/markdown/SVG reports.
    Report,
    /// Fast numeric self-checks: gradients, DSP oracle, mask and SNR stats.
    Selfcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::PrepareData => "prepare-data",
            Command::Pretrain => "pretrain",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Report => "report",
            Command::Selfcheck => "selfcheck",
        }
    }
}
