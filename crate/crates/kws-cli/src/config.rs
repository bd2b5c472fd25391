//! Run configuration: TOML/JSON file, flag overrides, and the `KWS_SEED`
//! environment override, resolved into one echoable struct.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kws_core::data::SynthCorpusConfig;
use kws_core::dsp::MfccConfig;
use kws_core::model::KwtVariant;
use kws_core::pretrain::PretrainConfig;
use kws_core::train::TrainConfig;
use kws_core::TrainingMethod;

use crate::args::Cli;
use crate::errors::CliError;

pub const SEED_ENV: &str = "KWS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Fully seeded synthetic corpus and noise bank; no external files.
    Synthetic,
    /// A Speech-Commands-style directory of keyword folders plus list files.
    SpeechCommands,
}

/// Synthetic corpus shape. The sample rate lives at the dataset level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_classes: usize,
    pub n_per_class: usize,
    pub n_val_per_class: usize,
    pub n_test_per_class: usize,
    /// Fraction of the training pool moved to the pretraining split.
    pub pretrain_fraction: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let core = SynthCorpusConfig::default();
        Self {
            n_classes: core.n_classes,
            n_per_class: core.n_per_class,
            n_val_per_class: core.n_val_per_class,
            n_test_per_class: core.n_test_per_class,
            pretrain_fraction: core.pretrain_fraction,
        }
    }
}

impl SynthSection {
    pub fn to_core(&self, sample_rate: u32) -> SynthCorpusConfig {
        SynthCorpusConfig {
            n_classes: self.n_classes,
            n_per_class: self.n_per_class,
            n_val_per_class: self.n_val_per_class,
            n_test_per_class: self.n_test_per_class,
            pretrain_fraction: self.pretrain_fraction,
            sample_rate,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    /// Keyword-folder root (speech-commands source only).
    pub root: Option<PathBuf>,
    /// Directory holding bus/ped/str/ssn/bbl/caf.wav (speech-commands only;
    /// the synthetic source generates its noise bank from the seed).
    pub noise_dir: Option<PathBuf>,
    /// A prepare-data run directory to reuse instead of rebuilding.
    pub prepared: Option<PathBuf>,
    pub sample_rate: u32,
    /// Synthetic noise bank length in seconds.
    pub noise_seconds: f64,
    /// Pretraining split fraction for the speech-commands source.
    pub pretrain_fraction: f64,
    pub synthetic: SynthSection,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            root: None,
            noise_dir: None,
            prepared: None,
            sample_rate: 16_000,
            noise_seconds: 30.0,
            pretrain_fraction: 0.2,
            synthetic: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { batch_size: 64 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// results.csv files from evaluate runs to merge into one report.
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub method: TrainingMethod,
    pub model: KwtVariant,
    /// Worker-pool cap; 0 lets the runtime decide.
    pub threads: usize,
    /// Single-threaded stepping for bit-identical re-runs.
    pub deterministic: bool,
    /// Parent for timestamped run directories (unless --out names one).
    pub out_root: PathBuf,
    /// Pretrained weights for fine-tuning, or the model to evaluate.
    pub checkpoint: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub mfcc: MfccConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            method: TrainingMethod::BaselineClean,
            model: KwtVariant::Kwt1,
            threads: 0,
            deterministic: false,
            out_root: PathBuf::from("runs"),
            checkpoint: None,
            dataset: DatasetConfig::default(),
            mfcc: MfccConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.dataset.source == DataSource::SpeechCommands
            && self.dataset.root.is_none()
            && self.dataset.prepared.is_none()
        {
            return Err(CliError::Config(
                "dataset.source = \"speech-commands\" requires dataset.root (or a prepared run \
                 via dataset.prepared)"
                    .into(),
            ));
        }
        if !(self.dataset.noise_seconds > 0.0) {
            return Err(CliError::Config("dataset.noise_seconds must be positive".into()));
        }
        if self.dataset.sample_rate == 0 {
            return Err(CliError::Config("dataset.sample_rate must be positive".into()));
        }
        if self.eval.batch_size == 0 {
            return Err(CliError::Config("eval.batch_size must be positive".into()));
        }
        self.mfcc
            .validate(self.dataset.sample_rate)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate()?;
        self.pretrain.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn load_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Resolution order: built-in defaults, then the config file, then flags,
/// then `KWS_SEED`, which overrides every other seed source.
pub fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(method) = cli.method {
        cfg.method = method;
    }
    if let Some(model) = cli.model {
        cfg.model = model;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    if let Ok(value) = std::env::var(SEED_ENV) {
        cfg.seed = value.trim().parse().map_err(|_| {
            CliError::Config(format!("{SEED_ENV}={value:?} is not a valid u64 seed"))
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}
