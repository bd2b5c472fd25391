//! Deterministic batch assembly shared by pretraining, fine-tuning, and
//! evaluation: load clean audio, apply the item's mix spec if any, extract
//! features. Items are independent, so assembly parallelizes freely without
//! affecting results.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::{mix_at_snr, AudioStore, ManifestEntry, MixSpec, NoiseClip, NoiseType};
use crate::dsp::{compute_features, FeatureMatrix, MfccConfig};

use super::TrainError;

/// One item's cached features: the clean view and, when a mix spec exists,
/// the noisy view.
#[derive(Debug, Clone)]
pub struct PreparedItem {
    pub id: String,
    pub label: usize,
    pub clean: FeatureMatrix,
    pub mixed: Option<FeatureMatrix>,
}

impl PreparedItem {
    /// The view an MTR-style consumer sees: mixed when available.
    pub fn mixed_or_clean(&self) -> &FeatureMatrix {
        self.mixed.as_ref().unwrap_or(&self.clean)
    }
}

/// Looks up noise clips by type.
pub fn noise_map(bank: &[NoiseClip]) -> BTreeMap<NoiseType, &NoiseClip> {
    bank.iter().map(|c| (c.noise_type, c)).collect()
}

/// Loads, mixes, and featurizes every entry. `specs` must be aligned with
/// `entries`; pass an all-`None` slice for clean-only consumers.
pub fn prepare_items(
    entries: &[&ManifestEntry],
    specs: &[Option<MixSpec>],
    store: &AudioStore,
    noise: &BTreeMap<NoiseType, &NoiseClip>,
    mfcc: &MfccConfig,
    target_samples: usize,
) -> Result<Vec<PreparedItem>, TrainError> {
    if specs.len() != entries.len() {
        return Err(TrainError::BadConfig(format!(
            "{} mix specs for {} entries",
            specs.len(),
            entries.len()
        )));
    }
    entries
        .par_iter()
        .zip(specs.par_iter())
        .map(|(entry, spec)| {
            let clean_wave = store.load(entry, target_samples)?;
            let clean = compute_features(&clean_wave, mfcc)?;
            let mixed = match spec {
                None => None,
                Some(spec) => {
                    let clip = noise
                        .get(&spec.noise_type)
                        .ok_or(TrainError::MissingNoise(spec.noise_type))?;
                    let wave = mix_at_snr(&clean_wave, clip, spec, false)?;
                    Some(compute_features(&wave, mfcc)?)
                }
            };
            Ok(PreparedItem {
                id: entry.id.clone(),
                label: entry.label,
                clean,
                mixed,
            })
        })
        .collect()
}
