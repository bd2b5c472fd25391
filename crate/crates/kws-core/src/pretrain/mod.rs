//! Self-supervised pretraining: span masking, teacher targets, EMA updates,
//! and the clean/noisy/denoising input-routing variants.

pub mod ema;
pub mod engine;
pub mod mask;
pub mod targets;

pub use ema::{ema_update, make_teacher};
pub use engine::{run_pretraining, tau_schedule, PretrainConfig, PretrainOutcome};
pub use mask::{sample_mask, start_probability, MaskPlan};
pub use targets::{student_loss, teacher_targets};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Input routing during pretraining: which branch sees mixed audio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainVariant {
    /// Student and teacher both consume clean audio.
    Clean,
    /// Student and teacher both consume the item's (possibly mixed) audio.
    Noisy,
    /// Student consumes mixed audio; teacher consumes the clean original.
    Denoising,
}

impl PretrainVariant {
    pub fn name(self) -> &'static str {
        match self {
            PretrainVariant::Clean => "clean",
            PretrainVariant::Noisy => "noisy",
            PretrainVariant::Denoising => "denoising",
        }
    }
}

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("invalid pretraining setup: {0}")]
    BadConfig(String),
    #[error("sequence of {t} steps cannot be span-masked with span {span}")]
    DegenerateLength { t: usize, span: usize },
    #[error("mask resampling failed to produce a usable mask")]
    MaskSamplingFailed,
    #[error("top-block count {k} out of range 1..={l}")]
    KOutOfRange { k: usize, l: usize },
    #[error("smoothing factor {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("teacher/student mismatch for {name}: {detail}")]
    Mismatch { name: String, detail: String },
    #[error("noisy/denoising pretraining requires noise material")]
    MissingNoise,
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Checkpoint(#[from] crate::model::CheckpointError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error("pretraining I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names() {
        assert_eq!(PretrainVariant::Clean.name(), "clean");
        assert_eq!(PretrainVariant::Noisy.name(), "noisy");
        assert_eq!(PretrainVariant::Denoising.name(), "denoising");
    }
}
