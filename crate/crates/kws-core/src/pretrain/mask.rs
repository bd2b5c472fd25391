//! Span masking over feature time steps.
//!
//! Every position independently starts a span of fixed length with
//! probability `p = 1 - (1 - target)^(1/span)`, so that an interior position
//! is masked with probability `target` (it escapes all `span` windows that
//! could cover it). Spans overlap freely and truncate at the right edge.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::PretrainError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPlan {
    pub t: usize,
    pub span: usize,
    pub starts: Vec<usize>,
    pub mask: Vec<bool>,
}

impl MaskPlan {
    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn coverage(&self) -> f64 {
        self.n_masked() as f64 / self.t as f64
    }
}

/// Per-position span-start probability for a coverage target.
pub fn start_probability(target_prob: f64, span: usize) -> f64 {
    1.0 - (1.0 - target_prob).powf(1.0 / span as f64)
}

/// Samples a mask with at least one masked and one unmasked position,
/// resampling degenerate draws.
pub fn sample_mask(
    t: usize,
    span: usize,
    target_prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<MaskPlan, PretrainError> {
    if span == 0 || t <= span {
        return Err(PretrainError::DegenerateLength { t, span });
    }
    if !(target_prob > 0.0 && target_prob < 1.0) {
        return Err(PretrainError::BadConfig(format!(
            "mask target probability {target_prob} outside (0, 1)"
        )));
    }
    let p = start_probability(target_prob, span);
    for _ in 0..10_000 {
        let starts: Vec<usize> = (0..t).filter(|_| rng.gen::<f64>() < p).collect();
        let mut mask = vec![false; t];
        for &s in &starts {
            for m in mask.iter_mut().skip(s).take(span) {
                *m = true;
            }
        }
        let n = mask.iter().filter(|&&m| m).count();
        if n > 0 && n < t {
            return Ok(MaskPlan { t, span, starts, mask });
        }
    }
    Err(PretrainError::MaskSamplingFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn start_probability_matches_closed_form() {
        let p = start_probability(0.65, 10);
        assert!((p - (1.0 - 0.35f64.powf(0.1))).abs() < 1e-15);
        assert!((p - 0.09966).abs() < 5e-5, "{p}");
    }

    #[test]
    fn coverage_near_target_on_average() {
        let mut rng = rng_from(17);
        let mut total = 0.0;
        let n = 1000;
        for _ in 0..n {
            total += sample_mask(98, 10, 0.65, &mut rng).unwrap().coverage();
        }
        let mean = total / n as f64;
        assert!((0.60..=0.70).contains(&mean), "mean coverage {mean}");
    }

    #[test]
    fn mask_is_union_of_windows() {
        let mut rng = rng_from(3);
        for _ in 0..200 {
            let plan = sample_mask(98, 10, 0.65, &mut rng).unwrap();
            let mut rebuilt = vec![false; plan.t];
            for &s in &plan.starts {
                for r in rebuilt.iter_mut().skip(s).take(plan.span) {
                    *r = true;
                }
            }
            assert_eq!(rebuilt, plan.mask);
            for &s in &plan.starts {
                assert!(s < plan.t);
            }
        }
    }

    #[test]
    fn degenerate_draws_are_resampled() {
        let mut rng = rng_from(5);
        // tiny target probability: empty draws dominate, yet every returned
        // plan must have both masked and unmasked positions
        for _ in 0..100 {
            let plan = sample_mask(30, 10, 0.01, &mut rng).unwrap();
            assert!(plan.n_masked() > 0 && plan.n_masked() < plan.t);
        }
    }

    #[test]
    fn rejects_degenerate_lengths_and_probabilities() {
        let mut rng = rng_from(1);
        assert!(matches!(
            sample_mask(10, 10, 0.65, &mut rng),
            Err(PretrainError::DegenerateLength { .. })
        ));
        assert!(matches!(
            sample_mask(5, 0, 0.65, &mut rng),
            Err(PretrainError::DegenerateLength { .. })
        ));
        assert!(sample_mask(98, 10, 0.0, &mut rng).is_err());
        assert!(sample_mask(98, 10, 1.0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = sample_mask(98, 10, 0.65, &mut rng_from(9)).unwrap();
        let b = sample_mask(98, 10, 0.65, &mut rng_from(9)).unwrap();
        assert_eq!(a, b);
    }
}
