//! The six training recipes: two supervised baselines and four
//! pretrain-then-fine-tune combinations built on the Data2Vec engine.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::pretrain::PretrainVariant;
use crate::train::DataPolicy;

/// A complete training recipe, naming both the pretraining stage (if any)
/// and the data policy used for the supervised stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingMethod {
    /// Supervised from scratch on clean data.
    #[serde(rename = "baseline-clean")]
    BaselineClean,
    /// Supervised from scratch with multistyle (50% noisy) data.
    #[serde(rename = "baseline-mtr")]
    BaselineMtr,
    /// Clean pretraining, clean fine-tuning.
    #[serde(rename = "d2v-clean")]
    D2vClean,
    /// Clean pretraining, multistyle fine-tuning.
    #[serde(rename = "d2v-clean+noisy")]
    D2vCleanNoisy,
    /// Multistyle inputs to both student and teacher, multistyle fine-tuning.
    #[serde(rename = "d2v-noisy")]
    D2vNoisy,
    /// Noisy student vs. clean teacher during pretraining, multistyle fine-tuning.
    #[serde(rename = "d2v-denoising")]
    D2vDenoising,
}

pub const ALL_METHODS: [TrainingMethod; 6] = [
    TrainingMethod::BaselineClean,
    TrainingMethod::BaselineMtr,
    TrainingMethod::D2vClean,
    TrainingMethod::D2vCleanNoisy,
    TrainingMethod::D2vNoisy,
    TrainingMethod::D2vDenoising,
];

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown training method '{got}'; valid names: {}", ALL_METHODS.map(|m| m.name()).join(", "))]
pub struct UnknownMethod {
    pub got: String,
}

impl TrainingMethod {
    pub fn name(self) -> &'static str {
        match self {
            TrainingMethod::BaselineClean => "baseline-clean",
            TrainingMethod::BaselineMtr => "baseline-mtr",
            TrainingMethod::D2vClean => "d2v-clean",
            TrainingMethod::D2vCleanNoisy => "d2v-clean+noisy",
            TrainingMethod::D2vNoisy => "d2v-noisy",
            TrainingMethod::D2vDenoising => "d2v-denoising",
        }
    }

    /// Human-readable label used in report tables.
    pub fn display_label(self) -> &'static str {
        match self {
            TrainingMethod::BaselineClean => "Baseline-clean",
            TrainingMethod::BaselineMtr => "Baseline-MTR",
            TrainingMethod::D2vClean => "Data2Vec-clean",
            TrainingMethod::D2vCleanNoisy => "Data2Vec-clean+noisy",
            TrainingMethod::D2vNoisy => "Data2Vec-noisy",
            TrainingMethod::D2vDenoising => "Data2Vec-denoising",
        }
    }

    /// Pretraining input routing, or `None` for the purely supervised baselines.
    pub fn pretrain_variant(self) -> Option<PretrainVariant> {
        match self {
            TrainingMethod::BaselineClean | TrainingMethod::BaselineMtr => None,
            TrainingMethod::D2vClean | TrainingMethod::D2vCleanNoisy => {
                Some(PretrainVariant::Clean)
            }
            TrainingMethod::D2vNoisy => Some(PretrainVariant::Noisy),
            TrainingMethod::D2vDenoising => Some(PretrainVariant::Denoising),
        }
    }

    /// Data policy of the supervised stage (from-scratch or fine-tuning).
    pub fn finetune_policy(self) -> DataPolicy {
        match self {
            TrainingMethod::BaselineClean | TrainingMethod::D2vClean => DataPolicy::Clean,
            TrainingMethod::BaselineMtr
            | TrainingMethod::D2vCleanNoisy
            | TrainingMethod::D2vNoisy
            | TrainingMethod::D2vDenoising => DataPolicy::Mtr,
        }
    }
}

impl fmt::Display for TrainingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingMethod {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod { got: s.to_string() })
    }
}
