//! Deterministic pretrain/train partitioning.
//!
//! Items are ranked by a per-id hash so the partition is a pure function of
//! (seed, id set): independent of manifest order, stable under re-runs, and
//! disjoint by construction.

use super::{DataError, DatasetManifest, Split};
use crate::rng::derive_seed_str;

/// Moves a fraction of the `Train` entries into `Pretrain`, in place.
///
/// Exactly `round(fraction * n)` items are selected: those with the smallest
/// `(hash, id)` rank key. `fraction` must lie strictly inside (0, 1).
pub fn split_pretrain_train(
    manifest: &mut DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<(), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::BadFraction(fraction));
    }
    let mut pool: Vec<(u64, &str)> = manifest
        .entries
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| (derive_seed_str(seed, "split", &e.id), e.id.as_str()))
        .collect();
    if pool.is_empty() {
        return Err(DataError::EmptyPool);
    }
    let n_pretrain = (fraction * pool.len() as f64).round() as usize;
    pool.sort_unstable();
    let chosen: std::collections::BTreeSet<String> = pool
        .into_iter()
        .take(n_pretrain)
        .map(|(_, id)| id.to_string())
        .collect();
    for entry in &mut manifest.entries {
        if entry.split == Split::Train && chosen.contains(&entry.id) {
            entry.split = Split::Pretrain;
        }
    }
    Ok(())
}
