//! SpecAugment-style feature masking for supervised training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::FeatureMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecAugmentConfig {
    pub n_time_masks: usize,
    pub max_time_width: usize,
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            max_time_width: 25,
            n_freq_masks: 2,
            max_freq_width: 7,
        }
    }
}

/// Zeroes random time columns and frequency rows in place. Training only;
/// evaluation must never call this.
pub fn apply_spec_augment(
    features: &mut FeatureMatrix,
    cfg: &SpecAugmentConfig,
    rng: &mut ChaCha8Rng,
) {
    let frames = features.frames();
    let dim = features.dim();
    for _ in 0..cfg.n_time_masks {
        let width = rng.gen_range(0..=cfg.max_time_width.min(frames));
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=frames - width);
        for t in start..start + width {
            for d in 0..dim {
                features.values_mut()[t * dim + d] = 0.0;
            }
        }
    }
    for _ in 0..cfg.n_freq_masks {
        let width = rng.gen_range(0..=cfg.max_freq_width.min(dim));
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=dim - width);
        for t in 0..frames {
            for d in start..start + width {
                features.values_mut()[t * dim + d] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn ones(frames: usize, dim: usize) -> FeatureMatrix {
        FeatureMatrix::new(vec![1.0; frames * dim], frames, dim).unwrap()
    }

    #[test]
    fn masks_zero_full_columns_and_rows() {
        let mut f = ones(98, 40);
        let mut rng = rng_from(5);
        apply_spec_augment(&mut f, &SpecAugmentConfig::default(), &mut rng);
        // every frame is either fully one-or-zero per coordinate pattern:
        // a time-masked frame is all zeros except freq-masked dims are zero anyway
        let zeros = f.values().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 0, "masking should have removed something");
        // columns: a dim is freq-masked iff zero at every non-time-masked frame
        let time_masked: Vec<bool> = (0..98)
            .map(|t| (0..40).all(|d| f.values()[t * 40 + d] == 0.0))
            .collect();
        for d in 0..40 {
            let vals: Vec<f32> = (0..98)
                .filter(|&t| !time_masked[t])
                .map(|t| f.values()[t * 40 + d])
                .collect();
            let all_zero = vals.iter().all(|&v| v == 0.0);
            let all_one = vals.iter().all(|&v| v == 1.0);
            assert!(all_zero || all_one, "dim {d} partially masked");
        }
    }

    #[test]
    fn widths_respect_bounds() {
        let cfg = SpecAugmentConfig::default();
        for seed in 0..20 {
            let mut f = ones(98, 40);
            let mut rng = rng_from(seed);
            apply_spec_augment(&mut f, &cfg, &mut rng);
            let zero_frames = (0..98)
                .filter(|&t| (0..40).all(|d| f.values()[t * 40 + d] == 0.0))
                .count();
            // at most two time masks of width <= 25 each
            assert!(zero_frames <= 50, "seed {seed}: {zero_frames}");
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut a = ones(50, 40);
        let mut b = ones(50, 40);
        apply_spec_augment(&mut a, &SpecAugmentConfig::default(), &mut rng_from(9));
        apply_spec_augment(&mut b, &SpecAugmentConfig::default(), &mut rng_from(9));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn zero_config_is_identity() {
        let cfg = SpecAugmentConfig {
            n_time_masks: 0,
            max_time_width: 0,
            n_freq_masks: 0,
            max_freq_width: 0,
        };
        let mut f = ones(10, 4);
        apply_spec_augment(&mut f, &cfg, &mut rng_from(1));
        assert!(f.values().iter().all(|&v| v == 1.0));
    }
}
