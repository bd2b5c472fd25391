//! Runs a trained classifier over test suites and records accuracies.

use std::collections::BTreeMap;

use crate::data::{AudioStore, ManifestEntry, NoiseClip, NoiseType, TestSuite};
use crate::dsp::MfccConfig;
use crate::model::{batch_features, predict_classes, KwtConfig};
use crate::tensor::ParameterSet;
use crate::train::prepare_items;

use super::aggregate::SuiteRecord;
use super::EvalError;

/// Scores one suite: every test entry is mixed per the suite's specs (or left
/// clean) and classified in batches.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_suite(
    model_cfg: &KwtConfig,
    params: &ParameterSet<f32>,
    suite: &TestSuite,
    entries: &[&ManifestEntry],
    store: &AudioStore,
    noise: &BTreeMap<NoiseType, &NoiseClip>,
    mfcc: &MfccConfig,
    target_samples: usize,
    batch_size: usize,
) -> Result<SuiteRecord, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    if batch_size == 0 {
        return Err(EvalError::BadInput("batch size must be positive".into()));
    }
    let items = prepare_items(entries, &suite.mixes, store, noise, mfcc, target_samples)?;
    let mut correct = 0usize;
    for chunk in items.chunks(batch_size) {
        let views: Vec<_> = chunk.iter().map(|it| it.mixed_or_clean()).collect();
        let features = batch_features::<f32>(&views).map_err(EvalError::Model)?;
        let predicted = predict_classes(model_cfg, params, &features)?;
        correct += predicted
            .iter()
            .zip(chunk)
            .filter(|(&p, it)| p == it.label)
            .count();
    }
    Ok(SuiteRecord {
        condition: suite.condition,
        accuracy: correct as f64 / items.len() as f64,
        n_items: items.len(),
    })
}

/// Scores every suite in order. The caller supplies suites produced by
/// `build_test_suites`, so records come back clean-first then by (type, SNR).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_all_suites(
    model_cfg: &KwtConfig,
    params: &ParameterSet<f32>,
    suites: &[TestSuite],
    entries: &[&ManifestEntry],
    store: &AudioStore,
    noise: &BTreeMap<NoiseType, &NoiseClip>,
    mfcc: &MfccConfig,
    target_samples: usize,
    batch_size: usize,
) -> Result<Vec<SuiteRecord>, EvalError> {
    suites
        .iter()
        .map(|suite| {
            evaluate_suite(
                model_cfg,
                params,
                suite,
                entries,
                store,
                noise,
                mfcc,
                target_samples,
                batch_size,
            )
        })
        .collect()
}
