//! Dataset plumbing: manifests, splits, exact-SNR mixing, noise synthesis,
//! multistyle assignments, test-suite construction, and synthetic corpora.

pub mod ingest;
pub mod mix;
pub mod mtr;
pub mod noise;
pub mod split;
pub mod store;
pub mod suites;
pub mod synth;

pub use ingest::{ingest_speech_commands, load_noise_dir};
pub use mix::{measure_snr, mix_at_snr};
pub use mtr::build_mtr_assignments;
pub use noise::{band_fractions, synth_noise, synth_noise_bank};
pub use split::split_pretrain_train;
pub use store::AudioStore;
pub use suites::build_test_suites;
pub use synth::{
    class_from_id, synth_corpus, synth_item_id, synth_wave, SynthCorpusConfig,
    SYNTH_CLIP_SECONDS,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::DspError;

/// The seven-level SNR grid used for both training noise and test suites.
pub const SNR_GRID: [i32; 7] = [-10, -5, 0, 5, 10, 15, 20];

/// Noise types present during training.
pub const SEEN_TYPES: [NoiseType; 4] =
    [NoiseType::Bus, NoiseType::Ped, NoiseType::Str, NoiseType::Ssn];

/// Noise types reserved for evaluation only.
pub const UNSEEN_TYPES: [NoiseType; 2] = [NoiseType::Bbl, NoiseType::Caf];

pub const ALL_NOISE_TYPES: [NoiseType; 6] = [
    NoiseType::Bus,
    NoiseType::Ped,
    NoiseType::Str,
    NoiseType::Ssn,
    NoiseType::Bbl,
    NoiseType::Caf,
];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("training pool is empty")]
    EmptyPool,
    #[error("split fraction {0} is outside (0, 1)")]
    BadFraction(f64),
    #[error("duplicate utterance id '{0}'")]
    DuplicateId(String),
    #[error("utterance id '{0}' cannot be parsed as a synthetic id")]
    BadSyntheticId(String),
    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),
    #[error("noise offset {offset} + {need} samples exceeds clip length {have}")]
    OffsetOutOfRange { offset: usize, need: usize, have: usize },
    #[error("SNR {0} dB is not on the {SNR_GRID:?} grid")]
    SnrOffGrid(i32),
    #[error("unknown noise type '{0}' (valid: bus, ped, str, ssn, bbl, caf)")]
    UnknownNoiseType(String),
    #[error("no seen noise types supplied")]
    EmptySeenTypes,
    #[error("missing list file {0}")]
    MissingListFile(PathBuf),
    #[error("keyword folder '{0}' contains no wav files")]
    EmptyKeywordFolder(String),
    #[error("'{0}' appears in both validation and testing lists")]
    DuplicateListEntry(String),
    #[error("list entry '{0}' does not match any ingested file")]
    DanglingListEntry(String),
    #[error("no keyword folders found under {0}")]
    NoKeywords(PathBuf),
    #[error("missing noise material for type {0}")]
    MissingNoise(NoiseType),
    #[error("manifest is malformed: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseType {
    #[serde(rename = "BUS")]
    Bus,
    #[serde(rename = "PED")]
    Ped,
    #[serde(rename = "STR")]
    Str,
    #[serde(rename = "SSN")]
    Ssn,
    #[serde(rename = "BBL")]
    Bbl,
    #[serde(rename = "CAF")]
    Caf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRole {
    Seen,
    Unseen,
}

impl NoiseType {
    pub fn name(self) -> &'static str {
        match self {
            NoiseType::Bus => "BUS",
            NoiseType::Ped => "PED",
            NoiseType::Str => "STR",
            NoiseType::Ssn => "SSN",
            NoiseType::Bbl => "BBL",
            NoiseType::Caf => "CAF",
        }
    }

    pub fn role(self) -> NoiseRole {
        match self {
            NoiseType::Bus | NoiseType::Ped | NoiseType::Str | NoiseType::Ssn => NoiseRole::Seen,
            NoiseType::Bbl | NoiseType::Caf => NoiseRole::Unseen,
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseType {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_NOISE_TYPES
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| DataError::UnknownNoiseType(s.to_string()))
    }
}

/// A noise recording with its seen/unseen role implied by the type.
#[derive(Debug, Clone)]
pub struct NoiseClip {
    pub noise_type: NoiseType,
    pub wave: crate::dsp::Waveform,
}

impl NoiseClip {
    pub fn role(&self) -> NoiseRole {
        self.noise_type.role()
    }
}

/// Instructions for mixing one utterance with noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSpec {
    pub noise_type: NoiseType,
    pub snr_db: i32,
    /// Start sample of the noise segment within the noise clip.
    pub noise_offset: usize,
    /// Per-utterance seed recorded for provenance and downstream draws.
    pub rng_seed: u64,
}

impl MixSpec {
    pub fn require_on_grid(&self) -> Result<(), DataError> {
        if SNR_GRID.contains(&self.snr_db) {
            Ok(())
        } else {
            Err(DataError::SnrOffGrid(self.snr_db))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One utterance in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub label: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixSpec>,
}

/// A full dataset description: class names plus one entry per utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub sample_rate: u32,
    pub labels: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Checks the structural invariants: unique ids and labels in range.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(DataError::DuplicateId(e.id.clone()));
            }
            if e.label >= self.labels.len() {
                return Err(DataError::BadManifest(format!(
                    "entry '{}' has label {} but only {} classes exist",
                    e.id,
                    e.label,
                    self.labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Serializes as JSON lines: a header record, then one entry per line.
    pub fn to_jsonl(&self) -> Result<String, DataError> {
        #[derive(Serialize)]
        struct Header<'a> {
            seed: u64,
            sample_rate: u32,
            labels: &'a [String],
        }
        let mut out = serde_json::to_string(&Header {
            seed: self.seed,
            sample_rate: self.sample_rate,
            labels: &self.labels,
        })?;
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DataError> {
        #[derive(Deserialize)]
        struct Header {
            seed: u64,
            sample_rate: u32,
            labels: Vec<String>,
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Header = serde_json::from_str(
            lines.next().ok_or_else(|| DataError::BadManifest("empty manifest".into()))?,
        )?;
        let mut entries = Vec::new();
        for line in lines {
            entries.push(serde_json::from_str(line)?);
        }
        let manifest = DatasetManifest {
            seed: header.seed,
            sample_rate: header.sample_rate,
            labels: header.labels,
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), DataError> {
        Ok(std::fs::write(path, self.to_jsonl()?)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DataError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// A test condition: clean audio or one (noise type, SNR) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    Clean,
    Noisy { noise_type: NoiseType, snr_db: i32 },
}

impl Condition {
    /// Column label: "clean" or the SNR in dB.
    pub fn snr_label(&self) -> String {
        match self {
            Condition::Clean => "clean".into(),
            Condition::Noisy { snr_db, .. } => snr_db.to_string(),
        }
    }

    pub fn type_label(&self) -> String {
        match self {
            Condition::Clean => "clean".into(),
            Condition::Noisy { noise_type, .. } => noise_type.name().into(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Clean => f.write_str("clean"),
            Condition::Noisy { noise_type, snr_db } => write!(f, "{noise_type}@{snr_db}dB"),
        }
    }
}

/// Every test utterance mixed under one condition (or left clean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSuite {
    pub condition: Condition,
    /// One optional mix per test entry, aligned with the test split order.
    pub mixes: Vec<Option<MixSpec>>,
}
