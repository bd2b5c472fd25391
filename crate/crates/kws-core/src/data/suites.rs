//! Evaluation test suites.
//!
//! One suite per (noise type, SNR) cell — six types times seven levels = 42 —
//! plus one clean suite. Every suite covers the full test split; only the
//! mixing condition varies. Offsets are derived per (suite, item) so each
//! cell hears a different noise segment but repeats identically across runs.

use super::{
    Condition, DataError, DatasetManifest, MixSpec, Split, TestSuite, ALL_NOISE_TYPES,
    SNR_GRID,
};
use crate::rng::{derive_seed_str, rng_from};
use rand::Rng;

/// Builds the clean suite plus all 42 noisy suites for the test split.
pub fn build_test_suites(
    manifest: &DatasetManifest,
    noise_samples: usize,
    clip_samples: usize,
    seed: u64,
) -> Result<Vec<TestSuite>, DataError> {
    let test_entries = manifest.split_entries(Split::Test);
    if test_entries.is_empty() {
        return Err(DataError::EmptyPool);
    }
    if noise_samples < clip_samples {
        return Err(DataError::BadManifest(format!(
            "noise clips shorter than utterances: {noise_samples} < {clip_samples}"
        )));
    }
    let mut suites = Vec::with_capacity(1 + ALL_NOISE_TYPES.len() * SNR_GRID.len());
    suites.push(TestSuite {
        condition: Condition::Clean,
        mixes: vec![None; test_entries.len()],
    });
    for noise_type in ALL_NOISE_TYPES {
        for snr_db in SNR_GRID {
            let label = format!("suite-{}-{}", noise_type.name(), snr_db);
            let mixes = test_entries
                .iter()
                .map(|e| {
                    let mut rng = rng_from(derive_seed_str(seed, &label, &e.id));
                    Some(MixSpec {
                        noise_type,
                        snr_db,
                        noise_offset: rng.gen_range(0..=noise_samples - clip_samples),
                        rng_seed: rng.gen(),
                    })
                })
                .collect();
            suites.push(TestSuite {
                condition: Condition::Noisy { noise_type, snr_db },
                mixes,
            });
        }
    }
    Ok(suites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ManifestEntry, NoiseType};

    fn manifest(n_test: usize) -> DatasetManifest {
        DatasetManifest {
            seed: 0,
            sample_rate: 16000,
            labels: vec!["x".into()],
            entries: (0..n_test)
                .map(|i| ManifestEntry {
                    id: format!("t{i:03}"),
                    path: format!("t{i:03}.wav"),
                    label: 0,
                    split: Split::Test,
                    mix: None,
                })
                .collect(),
        }
    }

    #[test]
    fn forty_two_noisy_plus_clean() {
        let suites = build_test_suites(&manifest(20), 160_000, 16_000, 4).unwrap();
        assert_eq!(suites.len(), 43);
        assert_eq!(suites[0].condition, Condition::Clean);
        assert!(suites[0].mixes.iter().all(|m| m.is_none()));
        let noisy = suites
            .iter()
            .filter(|s| matches!(s.condition, Condition::Noisy { .. }))
            .count();
        assert_eq!(noisy, 42);
        for s in &suites[1..] {
            assert_eq!(s.mixes.len(), 20);
            assert!(s.mixes.iter().all(|m| m.is_some()));
        }
    }

    #[test]
    fn cells_cover_the_full_grid() {
        let suites = build_test_suites(&manifest(3), 160_000, 16_000, 4).unwrap();
        let mut cells = std::collections::BTreeSet::new();
        for s in &suites[1..] {
            if let Condition::Noisy { noise_type, snr_db } = s.condition {
                cells.insert((noise_type.name().to_string(), snr_db));
                for m in s.mixes.iter().flatten() {
                    assert_eq!(m.noise_type, noise_type);
                    assert_eq!(m.snr_db, snr_db);
                }
            }
        }
        assert_eq!(cells.len(), 42);
    }

    #[test]
    fn offsets_vary_across_cells_but_repeat_across_runs() {
        let a = build_test_suites(&manifest(10), 160_000, 16_000, 4).unwrap();
        let b = build_test_suites(&manifest(10), 160_000, 16_000, 4).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.mixes, sb.mixes);
        }
        // same item, same type, different SNR cells -> different offsets
        let bus_cells: Vec<&TestSuite> = a
            .iter()
            .filter(|s| {
                matches!(s.condition, Condition::Noisy { noise_type, .. }
                    if noise_type == NoiseType::Bus)
            })
            .collect();
        let offsets: std::collections::BTreeSet<usize> = bus_cells
            .iter()
            .map(|s| s.mixes[0].as_ref().unwrap().noise_offset)
            .collect();
        assert!(offsets.len() > 1, "offsets should differ across cells");
    }

    #[test]
    fn rejects_empty_test_split_and_short_noise() {
        let empty = DatasetManifest {
            seed: 0,
            sample_rate: 16000,
            labels: vec!["x".into()],
            entries: vec![],
        };
        assert!(matches!(
            build_test_suites(&empty, 160_000, 16_000, 1),
            Err(DataError::EmptyPool)
        ));
        assert!(build_test_suites(&manifest(3), 100, 16_000, 1).is_err());
    }
}
