//! Multi-condition training (MTR) assignments.
//!
//! A fixed fraction of items (exactly `round(f * n)`) is paired with a noise
//! type, an SNR drawn from the training grid, and a clip offset. Assignments
//! are a pure function of (seed, item id): independent of slice order and
//! stable across runs.

use rand::Rng;

use super::{DataError, ManifestEntry, MixSpec, NoiseType, SNR_GRID};
use crate::rng::{derive_seed_str, rng_from};

/// Per-item mixing decisions for one data policy.
///
/// `noise_samples` is the length of the available noise clips and
/// `clip_samples` the utterance length; offsets are drawn so the noise
/// segment always fits.
pub fn build_mtr_assignments(
    entries: &[&ManifestEntry],
    noisy_fraction: f64,
    seen_types: &[NoiseType],
    snr_grid: &[i32],
    noise_samples: usize,
    clip_samples: usize,
    seed: u64,
) -> Result<Vec<Option<MixSpec>>, DataError> {
    if seen_types.is_empty() {
        return Err(DataError::EmptySeenTypes);
    }
    if !(0.0..=1.0).contains(&noisy_fraction) {
        return Err(DataError::BadFraction(noisy_fraction));
    }
    if snr_grid.is_empty() || noise_samples < clip_samples {
        return Err(DataError::BadManifest(format!(
            "mtr needs a non-empty SNR grid and noise clips of at least {clip_samples} samples"
        )));
    }
    let n_noisy = (noisy_fraction * entries.len() as f64).round() as usize;

    // Every item draws its full assignment; rank keys decide which of them
    // actually apply. This keeps each item's spec independent of the roster.
    let ranked: Vec<(u64, &str, MixSpec)> = entries
        .iter()
        .map(|e| {
            let mut rng = rng_from(derive_seed_str(seed, "mtr", &e.id));
            let rank: u64 = rng.gen();
            let noise_type = seen_types[rng.gen_range(0..seen_types.len())];
            let snr_db = snr_grid[rng.gen_range(0..snr_grid.len())];
            let noise_offset = rng.gen_range(0..=noise_samples - clip_samples);
            let rng_seed = rng.gen();
            (
                rank,
                e.id.as_str(),
                MixSpec { noise_type, snr_db, noise_offset, rng_seed },
            )
        })
        .collect();
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        (ranked[a].0, ranked[a].1).cmp(&(ranked[b].0, ranked[b].1))
    });
    let mut out = vec![None; entries.len()];
    for &idx in order.iter().take(n_noisy) {
        out[idx] = Some(ranked[idx].2.clone());
    }
    Ok(out)
}

/// Default training grid used for MTR draws.
pub fn training_snr_grid() -> &'static [i32] {
    &SNR_GRID
}
