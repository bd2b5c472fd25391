//! Aggregation of per-suite accuracies into seen/unseen per-SNR means and
//! the 8-term overall mean (7 SNR levels + clean).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Condition, NoiseRole, NoiseType, SNR_GRID};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub condition: Condition,
    pub accuracy: f64,
    pub n_items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub method: String,
    pub records: Vec<SuiteRecord>,
    /// Mean accuracy over the seen noise types at each SNR.
    pub seen_by_snr: BTreeMap<i32, f64>,
    /// Mean accuracy over the unseen noise types at each SNR.
    pub unseen_by_snr: BTreeMap<i32, f64>,
    pub clean: Option<f64>,
    /// Mean of the 7 seen per-SNR means plus clean (8 equally weighted terms).
    pub overall_seen: Option<f64>,
    /// Same construction over the unseen types.
    pub overall_unseen: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Folds suite records into per-SNR and overall means. Incomplete grids are
/// allowed: aggregates cover whatever cells exist, and the overall means are
/// present only when all 7 SNR levels and the clean suite are.
pub fn aggregate(method: &str, records: &[SuiteRecord]) -> Result<EvalResult, EvalError> {
    if records.is_empty() {
        return Err(EvalError::BadInput("no suite records".into()));
    }
    for r in records {
        if !(0.0..=1.0).contains(&r.accuracy) {
            return Err(EvalError::BadInput(format!(
                "accuracy {} outside [0, 1]",
                r.accuracy
            )));
        }
    }
    let mut seen_cells: BTreeMap<i32, Vec<(NoiseType, f64)>> = BTreeMap::new();
    let mut unseen_cells: BTreeMap<i32, Vec<(NoiseType, f64)>> = BTreeMap::new();
    let mut clean = None;
    for r in records {
        match r.condition {
            Condition::Clean => clean = Some(r.accuracy),
            Condition::Noisy { noise_type, snr_db } => {
                let bucket = match noise_type.role() {
                    NoiseRole::Seen => seen_cells.entry(snr_db).or_default(),
                    NoiseRole::Unseen => unseen_cells.entry(snr_db).or_default(),
                };
                bucket.push((noise_type, r.accuracy));
            }
        }
    }
    // Canonical summation order (by noise type, then value) keeps the means
    // bit-identical under any permutation of the input records.
    let bucket_mean = |bucket: &mut Vec<(NoiseType, f64)>| {
        bucket.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        mean(&bucket.iter().map(|&(_, acc)| acc).collect::<Vec<_>>())
    };
    let seen_by_snr: BTreeMap<i32, f64> = seen_cells
        .iter_mut()
        .map(|(&snr, v)| (snr, bucket_mean(v)))
        .collect();
    let unseen_by_snr: BTreeMap<i32, f64> = unseen_cells
        .iter_mut()
        .map(|(&snr, v)| (snr, bucket_mean(v)))
        .collect();

    let overall = |by_snr: &BTreeMap<i32, f64>| -> Option<f64> {
        let clean_acc = clean?;
        if SNR_GRID.iter().all(|snr| by_snr.contains_key(snr)) {
            let mut terms: Vec<f64> = SNR_GRID.iter().map(|snr| by_snr[snr]).collect();
            terms.push(clean_acc);
            Some(mean(&terms))
        } else {
            None
        }
    };
    let overall_seen = overall(&seen_by_snr);
    let overall_unseen = overall(&unseen_by_snr);

    Ok(EvalResult {
        method: method.to_string(),
        records: records.to_vec(),
        seen_by_snr,
        unseen_by_snr,
        clean,
        overall_seen,
        overall_unseen,
    })
}

/// Percentage change of `a` relative to `b`: `100 * (a - b) / b`.
pub fn relative_improvement(a: f64, b: f64) -> Result<f64, EvalError> {
    if !(b > 0.0) {
        return Err(EvalError::BadInput(format!(
            "relative improvement needs a positive base, got {b}"
        )));
    }
    Ok(100.0 * (a - b) / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NoiseType, ALL_NOISE_TYPES, SEEN_TYPES, UNSEEN_TYPES};

    fn noisy(noise_type: NoiseType, snr_db: i32, accuracy: f64) -> SuiteRecord {
        SuiteRecord {
            condition: Condition::Noisy { noise_type, snr_db },
            accuracy,
            n_items: 100,
        }
    }

    fn clean(accuracy: f64) -> SuiteRecord {
        SuiteRecord {
            condition: Condition::Clean,
            accuracy,
            n_items: 100,
        }
    }

    #[test]
    fn full_grid_means() {
        // seen types all at 0.6, unseen at 0.4, clean 0.9
        let mut records = vec![clean(0.9)];
        for t in ALL_NOISE_TYPES {
            for snr in SNR_GRID {
                let acc = match t.role() {
                    NoiseRole::Seen => 0.6,
                    NoiseRole::Unseen => 0.4,
                };
                records.push(noisy(t, snr, acc));
            }
        }
        let r = aggregate("m", &records).unwrap();
        assert_eq!(r.seen_by_snr.len(), 7);
        assert!(r.seen_by_snr.values().all(|&v| (v - 0.6).abs() < 1e-12));
        assert!(r.unseen_by_snr.values().all(|&v| (v - 0.4).abs() < 1e-12));
        // overall = (7 * 0.6 + 0.9) / 8
        let want = (7.0 * 0.6 + 0.9) / 8.0;
        assert!((r.overall_seen.unwrap() - want).abs() < 1e-12);
        let want_u = (7.0 * 0.4 + 0.9) / 8.0;
        assert!((r.overall_unseen.unwrap() - want_u).abs() < 1e-12);
    }

    #[test]
    fn eight_term_overall_mean_example() {
        // A full seen row at the reference accuracies plus clean: the overall
        // mean is the plain average of the 8 values, 0.70838 here.
        let seen_row = [0.310, 0.500, 0.665, 0.769, 0.825, 0.854, 0.868];
        let mut records = vec![clean(0.876)];
        for (snr, &acc) in SNR_GRID.iter().zip(seen_row.iter()) {
            for t in SEEN_TYPES {
                records.push(noisy(t, *snr, acc));
            }
        }
        let r = aggregate("d2v-denoising", &records).unwrap();
        let overall = r.overall_seen.unwrap();
        assert!((overall - 0.708375).abs() < 1e-12, "got {overall}");
        assert!((overall - 0.708).abs() < 0.001);
        assert!(r.overall_unseen.is_none());
    }

    #[test]
    fn permutation_invariance() {
        let mut records = vec![clean(0.8)];
        for (i, t) in ALL_NOISE_TYPES.into_iter().enumerate() {
            for (j, snr) in SNR_GRID.into_iter().enumerate() {
                records.push(noisy(t, snr, 0.3 + 0.01 * (i + j) as f64));
            }
        }
        let a = aggregate("m", &records).unwrap();
        records.reverse();
        let b = aggregate("m", &records).unwrap();
        assert_eq!(a.seen_by_snr, b.seen_by_snr);
        assert_eq!(a.overall_seen, b.overall_seen);
        assert_eq!(a.overall_unseen, b.overall_unseen);
    }

    #[test]
    fn subset_yields_partial_aggregates() {
        let records = vec![noisy(SEEN_TYPES[0], 0, 0.55)];
        let r = aggregate("m", &records).unwrap();
        assert_eq!(r.seen_by_snr[&0], 0.55);
        assert!(r.clean.is_none());
        assert!(r.overall_seen.is_none());
        // single-suite subset: the aggregate equals that suite
        assert_eq!(r.seen_by_snr.len(), 1);
    }

    #[test]
    fn unseen_types_never_pollute_seen_means() {
        let records = vec![
            noisy(SEEN_TYPES[0], 0, 1.0),
            noisy(UNSEEN_TYPES[0], 0, 0.0),
        ];
        let r = aggregate("m", &records).unwrap();
        assert_eq!(r.seen_by_snr[&0], 1.0);
        assert_eq!(r.unseen_by_snr[&0], 0.0);
    }

    #[test]
    fn relative_improvement_examples() {
        assert!((relative_improvement(0.708, 0.609).unwrap() - 16.256).abs() < 0.01);
        assert!((relative_improvement(0.717, 0.613).unwrap() - 16.965).abs() < 0.01);
        assert_eq!(relative_improvement(0.5, 0.5).unwrap(), 0.0);
        assert!(relative_improvement(0.5, 0.0).is_err());
        // antisymmetry up to the ratio of bases
        let (a, b) = (0.731, 0.642);
        let fwd = relative_improvement(a, b).unwrap();
        let back = relative_improvement(b, a).unwrap();
        assert!((fwd + back * (a / b)).abs() < 1e-9);
    }

    #[test]
    fn rejects_garbage() {
        assert!(aggregate("m", &[]).is_err());
        assert!(aggregate("m", &[clean(1.5)]).is_err());
    }
}
