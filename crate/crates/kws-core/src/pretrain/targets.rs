//! Teacher targets (normalize-then-average over the top K blocks) and the
//! student's masked regression loss.

use std::collections::BTreeMap;

use crate::model::{encoder_forward, regression_predictions, KwtConfig, LN_EPS};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorId};

use super::PretrainError;

/// Parameter-free per-time-step normalization over the feature axis,
/// accumulated in f64.
fn normalize_rows_f64(values: &[f64], rows: usize, d: usize, out: &mut [f64]) {
    for r in 0..rows {
        let row = &values[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o += (v - mean) * inv;
        }
    }
}

/// Runs the teacher encoder on unmasked features and averages the normalized
/// outputs of the top `k` blocks. The result carries no gradient history.
pub fn teacher_targets<F: Scalar>(
    cfg: &KwtConfig,
    teacher: &crate::tensor::ParameterSet<F>,
    features: &Tensor<F>,
    k: usize,
) -> Result<Tensor<F>, PretrainError> {
    if k == 0 || k > cfg.n_blocks {
        return Err(PretrainError::KOutOfRange { k, l: cfg.n_blocks });
    }
    let mut tape: Tape<F> = Tape::new();
    let ids = tape.source_params(teacher);
    let feat_id = tape.leaf(features);
    let trace = encoder_forward(&mut tape, &ids, cfg, feat_id, None)?;
    average_normalized_blocks(&tape, &trace.block_outputs, k)
}

/// Normalize-then-average over the last `k` of the given block outputs.
pub fn average_normalized_blocks<F: Scalar>(
    tape: &Tape<F>,
    block_outputs: &[TensorId],
    k: usize,
) -> Result<Tensor<F>, PretrainError> {
    if k == 0 || k > block_outputs.len() {
        return Err(PretrainError::KOutOfRange { k, l: block_outputs.len() });
    }
    let shape = tape.shape(block_outputs[0]).to_vec();
    let d = *shape.last().ok_or(PretrainError::BadConfig(
        "block outputs must have a feature axis".into(),
    ))?;
    let rows = shape.iter().product::<usize>() / d;
    let mut acc = vec![0.0f64; rows * d];
    for &block in &block_outputs[block_outputs.len() - k..] {
        let values: Vec<f64> = tape.value(block).iter().map(|&v| v.to_f64()).collect();
        normalize_rows_f64(&values, rows, d, &mut acc);
    }
    let data: Vec<F> = acc.iter().map(|&v| F::from_f64(v / k as f64)).collect();
    Ok(Tensor::new(shape, data)?)
}

/// Student branch: masked encoder forward, regression head, masked MSE
/// against the (constant) teacher targets.
pub fn student_loss<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    cfg: &KwtConfig,
    features: TensorId,
    mask: &[bool],
    targets: &Tensor<F>,
) -> Result<TensorId, PretrainError> {
    let trace = encoder_forward(tape, ids, cfg, features, Some(mask))?;
    let predictions = regression_predictions(tape, ids, trace.final_output())?;
    let target_id = tape.constant(targets.shape().to_vec(), targets.data().to_vec())?;
    Ok(tape.mse_masked(predictions, target_id, Some(mask))?)
}
