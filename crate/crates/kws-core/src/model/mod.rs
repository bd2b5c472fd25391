//! The keyword-spotting transformer: input projection, sinusoidal positional
//! encodings, pre-norm transformer blocks, mean pooling, MLP classifier.

pub mod checkpoint;
pub mod forward;
pub mod positional;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};
pub use forward::{
    batch_features, encoder_forward, forward_logits, predict_classes,
    regression_predictions, EncoderTrace, LN_EPS,
};
pub use positional::positional_encoding;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed_str, rng_from, truncated_normal};
use crate::scalar::Scalar;
use crate::tensor::{ParameterSet, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence length {t} exceeds the model maximum {max}")]
    SequenceTooLong { t: usize, max: usize },
    #[error("missing parameter '{0}'")]
    MissingParam(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Named model size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KwtVariant {
    #[serde(rename = "kwt1")]
    Kwt1,
    #[serde(rename = "kwt2")]
    Kwt2,
    #[serde(rename = "kwt3")]
    Kwt3,
    #[serde(rename = "kwt-tiny")]
    KwtTiny,
}

pub const ALL_VARIANTS: [KwtVariant; 4] =
    [KwtVariant::Kwt1, KwtVariant::Kwt2, KwtVariant::Kwt3, KwtVariant::KwtTiny];

impl KwtVariant {
    pub fn name(self) -> &'static str {
        match self {
            KwtVariant::Kwt1 => "kwt1",
            KwtVariant::Kwt2 => "kwt2",
            KwtVariant::Kwt3 => "kwt3",
            KwtVariant::KwtTiny => "kwt-tiny",
        }
    }

    pub fn config(self) -> KwtConfig {
        match self {
            KwtVariant::Kwt1 => KwtConfig::sized(self.name(), 12, 64, 1),
            KwtVariant::Kwt2 => KwtConfig::sized(self.name(), 12, 128, 2),
            KwtVariant::Kwt3 => KwtConfig::sized(self.name(), 12, 192, 3),
            // Two blocks at d=16: small enough for finite-difference gradient
            // checks and CPU smoke experiments.
            KwtVariant::KwtTiny => KwtConfig::sized(self.name(), 2, 16, 2),
        }
    }
}

impl FromStr for KwtVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_VARIANTS.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            ModelError::InvalidConfig(format!(
                "unknown model variant '{s}'; valid names: {}",
                ALL_VARIANTS.map(|v| v.name()).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KwtConfig {
    pub variant: String,
    pub n_blocks: usize,
    pub dim: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub n_classes: usize,
    pub input_dim: usize,
    pub max_t: usize,
}

impl KwtConfig {
    fn sized(variant: &str, n_blocks: usize, dim: usize, heads: usize) -> Self {
        Self {
            variant: variant.to_string(),
            n_blocks,
            dim,
            heads,
            mlp_ratio: 4,
            n_classes: 35,
            input_dim: 40,
            max_t: 98,
        }
    }

    pub fn with_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = n_classes;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_blocks == 0 {
            return Err(ModelError::InvalidConfig("n_blocks must be at least 1".into()));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.dim == 0 || self.mlp_ratio == 0 || self.n_classes == 0 || self.input_dim == 0 {
            return Err(ModelError::InvalidConfig("zero-sized dimension".into()));
        }
        if self.max_t == 0 {
            return Err(ModelError::InvalidConfig("max_t must be positive".into()));
        }
        Ok(())
    }

    fn block_param_names(&self, i: usize) -> Vec<(String, Vec<usize>, Init)> {
        let d = self.dim;
        let hidden = self.mlp_ratio * d;
        let p = |suffix: &str| format!("block.{i:02}.{suffix}");
        vec![
            (p("attn_norm.gamma"), vec![d], Init::One),
            (p("attn_norm.beta"), vec![d], Init::Zero),
            (p("attn.q.weight"), vec![d, d], Init::TruncNormal),
            (p("attn.q.bias"), vec![d], Init::Zero),
            (p("attn.k.weight"), vec![d, d], Init::TruncNormal),
            (p("attn.k.bias"), vec![d], Init::Zero),
            (p("attn.v.weight"), vec![d, d], Init::TruncNormal),
            (p("attn.v.bias"), vec![d], Init::Zero),
            (p("attn.out.weight"), vec![d, d], Init::TruncNormal),
            (p("attn.out.bias"), vec![d], Init::Zero),
            (p("mlp_norm.gamma"), vec![d], Init::One),
            (p("mlp_norm.beta"), vec![d], Init::Zero),
            (p("mlp.fc1.weight"), vec![d, hidden], Init::TruncNormal),
            (p("mlp.fc1.bias"), vec![hidden], Init::Zero),
            (p("mlp.fc2.weight"), vec![hidden, d], Init::TruncNormal),
            (p("mlp.fc2.bias"), vec![d], Init::Zero),
        ]
    }

    /// Every parameter of the supervised model: name, shape, init rule.
    fn supervised_param_names(&self) -> Vec<(String, Vec<usize>, Init)> {
        let d = self.dim;
        let mut names = vec![
            ("input_proj.weight".to_string(), vec![self.input_dim, d], Init::TruncNormal),
            ("input_proj.bias".to_string(), vec![d], Init::Zero),
        ];
        for i in 0..self.n_blocks {
            names.extend(self.block_param_names(i));
        }
        names.extend([
            ("final_norm.gamma".to_string(), vec![d], Init::One),
            ("final_norm.beta".to_string(), vec![d], Init::Zero),
            ("head.fc1.weight".to_string(), vec![d, d], Init::TruncNormal),
            ("head.fc1.bias".to_string(), vec![d], Init::Zero),
            ("head.fc2.weight".to_string(), vec![d, self.n_classes], Init::TruncNormal),
            ("head.fc2.bias".to_string(), vec![self.n_classes], Init::Zero),
        ]);
        names
    }

    /// Extra parameters that exist only during pretraining.
    fn pretrain_param_names(&self) -> Vec<(String, Vec<usize>, Init)> {
        let d = self.dim;
        vec![
            ("mask_token".to_string(), vec![d], Init::TruncNormal),
            ("reg_head.weight".to_string(), vec![d, d], Init::TruncNormal),
            ("reg_head.bias".to_string(), vec![d], Init::Zero),
        ]
    }
}

#[derive(Clone, Copy)]
enum Init {
    Zero,
    One,
    TruncNormal,
}

const INIT_SIGMA: f64 = 0.02;

fn init_tensor<F: Scalar>(shape: &[usize], init: Init, seed: u64, name: &str) -> Tensor<F> {
    let numel: usize = shape.iter().product();
    let data: Vec<F> = match init {
        Init::Zero => vec![F::zero(); numel],
        Init::One => vec![F::one(); numel],
        Init::TruncNormal => {
            // one stream per tensor so results don't depend on insertion order
            let mut rng = rng_from(derive_seed_str(seed, "init", name));
            (0..numel).map(|_| F::from_f64(truncated_normal(&mut rng, INIT_SIGMA))).collect()
        }
    };
    Tensor::param(shape.to_vec(), data).expect("init shapes are consistent")
}

/// Initializes the supervised model: truncated-normal weights (sigma 0.02),
/// zero biases, unit norm gains. Deterministic per seed.
pub fn init_model<F: Scalar>(cfg: &KwtConfig, seed: u64) -> Result<ParameterSet<F>, ModelError> {
    cfg.validate()?;
    let mut params = ParameterSet::new();
    for (name, shape, init) in cfg.supervised_param_names() {
        params.insert(name.clone(), init_tensor(&shape, init, seed, &name));
    }
    Ok(params)
}

/// Supervised model plus the mask token and the regression head used by the
/// self-supervised objective.
pub fn init_pretrain_model<F: Scalar>(
    cfg: &KwtConfig,
    seed: u64,
) -> Result<ParameterSet<F>, ModelError> {
    let mut params = init_model(cfg, seed)?;
    for (name, shape, init) in cfg.pretrain_param_names() {
        params.insert(name.clone(), init_tensor(&shape, init, seed, &name));
    }
    Ok(params)
}

/// True for parameters mirrored into the EMA teacher: the input projection
/// and the transformer blocks. The mask token, regression head, final norm,
/// and classifier are student-only.
pub fn is_teacher_param(name: &str) -> bool {
    name.starts_with("input_proj.") || name.starts_with("block.")
}

/// True for parameters that only exist during pretraining.
pub fn is_pretrain_only_param(name: &str) -> bool {
    name == "mask_token" || name.starts_with("reg_head.")
}

/// Scalar-parameter count of the deployable classifier, excluding
/// pretraining-only tensors if present.
pub fn param_count<F: Scalar>(params: &ParameterSet<F>) -> usize {
    params
        .iter()
        .filter(|(name, _)| !is_pretrain_only_param(name))
        .map(|(_, t)| t.numel())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_sizes_hit_published_budgets() {
        // ~0.6M / 2.4M / 5.4M parameters, each within +-10%
        let expect = [
            (KwtVariant::Kwt1, 600_000.0),
            (KwtVariant::Kwt2, 2_400_000.0),
            (KwtVariant::Kwt3, 5_400_000.0),
        ];
        for (variant, target) in expect {
            let params = init_model::<f32>(&variant.config(), 0).unwrap();
            let n = param_count(&params) as f64;
            assert!(
                (n - target).abs() / target <= 0.10,
                "{}: {n} outside 10% of {target}",
                variant.name()
            );
        }
    }

    #[test]
    fn param_count_grows_quadratically_in_dim() {
        let count = |v: KwtVariant| {
            param_count(&init_model::<f32>(&v.config(), 0).unwrap()) as f64
        };
        let (c1, c2, c3) = (count(KwtVariant::Kwt1), count(KwtVariant::Kwt2), count(KwtVariant::Kwt3));
        // d doubles 64 -> 128: expect ~4x; d grows 1.5x 128 -> 192: expect ~2.25x
        assert!((c2 / c1 - 4.0).abs() < 0.25, "ratio {}", c2 / c1);
        assert!((c3 / c2 - 2.25).abs() < 0.15, "ratio {}", c3 / c2);
    }

    #[test]
    fn mask_token_excluded_from_deployable_count() {
        let cfg = KwtVariant::KwtTiny.config();
        let supervised = init_model::<f32>(&cfg, 1).unwrap();
        let pretrain = init_pretrain_model::<f32>(&cfg, 1).unwrap();
        assert_eq!(param_count(&supervised), param_count(&pretrain));
        assert!(pretrain.param_count() > supervised.param_count());
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let cfg = KwtVariant::KwtTiny.config();
        let a = init_model::<f32>(&cfg, 42).unwrap();
        let b = init_model::<f32>(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = init_model::<f32>(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_statistics_match_the_rules() {
        let cfg = KwtVariant::Kwt1.config();
        let params = init_model::<f64>(&cfg, 7).unwrap();
        let w = params.get("block.00.attn.q.weight").unwrap();
        // truncated at 2 sigma = 0.04
        assert!(w.data().iter().all(|&v| v.abs() <= 0.04));
        let sd = (w.data().iter().map(|v| v * v).sum::<f64>() / w.numel() as f64).sqrt();
        assert!(sd > 0.01 && sd < 0.03, "sd {sd}");
        assert!(params.get("input_proj.bias").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(params.get("final_norm.gamma").unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut cfg = KwtVariant::Kwt1.config();
        cfg.heads = 3; // 64 % 3 != 0
        assert!(matches!(init_model::<f32>(&cfg, 0), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn empty_parameter_set_counts_zero_and_count_is_additive() {
        assert_eq!(param_count::<f32>(&ParameterSet::new()), 0);
        let cfg = KwtVariant::KwtTiny.config();
        let params = init_model::<f32>(&cfg, 0).unwrap();
        let split: usize = params
            .iter()
            .filter(|(n, _)| n.starts_with("block."))
            .map(|(_, t)| t.numel())
            .sum::<usize>()
            + params
                .iter()
                .filter(|(n, _)| !n.starts_with("block."))
                .map(|(_, t)| t.numel())
                .sum::<usize>();
        assert_eq!(split, param_count(&params));
    }

    #[test]
    fn variant_names_parse() {
        for v in ALL_VARIANTS {
            assert_eq!(v.name().parse::<KwtVariant>().unwrap(), v);
        }
        assert!("kwt9".parse::<KwtVariant>().is_err());
    }
}
