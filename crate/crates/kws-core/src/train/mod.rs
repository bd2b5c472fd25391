//! Supervised training and fine-tuning: AdamW, warmup + cosine schedule,
//! SpecAugment, and the full cross-entropy training loop.

pub mod adamw;
pub mod batch;
pub mod schedule;
pub mod specaugment;
pub mod supervised;

pub use adamw::{AdamW, AdamWConfig};
pub use batch::{noise_map, prepare_items, PreparedItem};
pub use schedule::lr_schedule;
pub use specaugment::{apply_spec_augment, SpecAugmentConfig};
pub use supervised::{run_supervised, FinetuneSource, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which audio the supervised stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPolicy {
    /// Unaltered audio for every item.
    Clean,
    /// Multistyle: a seeded half of the items are mixed with noise.
    Mtr,
}

impl DataPolicy {
    pub fn name(self) -> &'static str {
        match self {
            DataPolicy::Clean => "clean",
            DataPolicy::Mtr => "mtr",
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    BadConfig(String),
    #[error("no noise clip available for {0}")]
    MissingNoise(crate::data::NoiseType),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error("checkpoint incompatible with requested model: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Checkpoint(#[from] crate::model::CheckpointError),
    #[error("training I/O: {0}")]
    Io(#[from] std::io::Error),
}
