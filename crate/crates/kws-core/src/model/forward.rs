//! Graph construction for the transformer forward pass.

use std::collections::BTreeMap;

use super::{positional_encoding, KwtConfig, ModelError};
use crate::dsp::FeatureMatrix;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorId};

pub const LN_EPS: f64 = 1e-5;

/// Intermediate tensors of one encoder pass.
pub struct EncoderTrace {
    /// Input after projection, optional mask replacement, and positional
    /// encodings: the residual stream before block 0.
    pub embedded: TensorId,
    /// Residual stream after each block, in order.
    pub block_outputs: Vec<TensorId>,
    /// Post-softmax attention weights per block, shaped [B, H, T, T].
    pub attention: Vec<TensorId>,
}

impl EncoderTrace {
    pub fn final_output(&self) -> TensorId {
        *self.block_outputs.last().expect("at least one block")
    }
}

fn pid(ids: &BTreeMap<String, TensorId>, name: &str) -> Result<TensorId, ModelError> {
    ids.get(name).copied().ok_or_else(|| ModelError::MissingParam(name.to_string()))
}

fn linear<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    x: TensorId,
    prefix: &str,
) -> Result<TensorId, ModelError> {
    let w = pid(ids, &format!("{prefix}.weight"))?;
    let b = pid(ids, &format!("{prefix}.bias"))?;
    let xw = tape.matmul(x, w)?;
    Ok(tape.add_broadcast(xw, b)?)
}

fn layer_norm<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    x: TensorId,
    prefix: &str,
) -> Result<TensorId, ModelError> {
    let gamma = pid(ids, &format!("{prefix}.gamma"))?;
    let beta = pid(ids, &format!("{prefix}.beta"))?;
    Ok(tape.layer_norm(x, gamma, beta, F::from_f64(LN_EPS))?)
}

/// Stacks equal-length feature matrices into a [B, T, dim] tensor.
pub fn batch_features<F: Scalar>(batch: &[&FeatureMatrix]) -> Result<Tensor<F>, ModelError> {
    let first = batch.first().ok_or_else(|| ModelError::InvalidConfig("empty batch".into()))?;
    let (t_len, dim) = (first.frames(), first.dim());
    let mut data = Vec::with_capacity(batch.len() * t_len * dim);
    for (i, f) in batch.iter().enumerate() {
        if f.frames() != t_len || f.dim() != dim {
            return Err(ModelError::InvalidConfig(format!(
                "batch item {i} is {}x{}, expected {t_len}x{dim}",
                f.frames(),
                f.dim()
            )));
        }
        data.extend(f.values().iter().map(|&v| F::from_f64(v as f64)));
    }
    Ok(Tensor::new(vec![batch.len(), t_len, dim], data).expect("shape matches construction"))
}

/// Runs projection, optional mask replacement, positional encodings, and all
/// transformer blocks. `mask` (one flag per batch x time position) replaces
/// masked steps with the learned mask token before positions are added.
pub fn encoder_forward<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    cfg: &KwtConfig,
    features: TensorId,
    mask: Option<&[bool]>,
) -> Result<EncoderTrace, ModelError> {
    cfg.validate()?;
    let shape = tape.shape(features).to_vec();
    if shape.len() != 3 || shape[2] != cfg.input_dim {
        return Err(ModelError::InvalidConfig(format!(
            "features must be [B, T, {}], got {shape:?}",
            cfg.input_dim
        )));
    }
    let t_len = shape[1];
    if t_len > cfg.max_t {
        return Err(ModelError::SequenceTooLong { t: t_len, max: cfg.max_t });
    }

    let mut x = linear(tape, ids, features, "input_proj")?;
    if let Some(mask) = mask {
        let token = pid(ids, "mask_token")?;
        x = tape.mask_replace(x, token, mask)?;
    }
    let pe = positional_encoding::<F>(t_len, cfg.dim);
    let pe_id = tape.constant(pe.shape().to_vec(), pe.data().to_vec())?;
    x = tape.add_broadcast(x, pe_id)?;

    let embedded = x;
    let mut block_outputs = Vec::with_capacity(cfg.n_blocks);
    let mut attention = Vec::with_capacity(cfg.n_blocks);
    let scale = F::from_f64(1.0 / (cfg.head_dim() as f64).sqrt());

    for i in 0..cfg.n_blocks {
        let p = |s: &str| format!("block.{i:02}.{s}");

        // attention sublayer
        let normed = layer_norm(tape, ids, x, &p("attn_norm"))?;
        let q = linear(tape, ids, normed, &p("attn.q"))?;
        let k = linear(tape, ids, normed, &p("attn.k"))?;
        let v = linear(tape, ids, normed, &p("attn.v"))?;
        let qh = tape.split_heads(q, cfg.heads)?;
        let kh = tape.split_heads(k, cfg.heads)?;
        let vh = tape.split_heads(v, cfg.heads)?;
        let kt = tape.transpose_last(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, scale)?;
        let attn = tape.softmax(scaled)?;
        attention.push(attn);
        let ctx = tape.matmul(attn, vh)?;
        let merged = tape.merge_heads(ctx)?;
        let projected = linear(tape, ids, merged, &p("attn.out"))?;
        x = tape.add(x, projected)?;

        // MLP sublayer
        let normed = layer_norm(tape, ids, x, &p("mlp_norm"))?;
        let hidden = linear(tape, ids, normed, &p("mlp.fc1"))?;
        let activated = tape.gelu(hidden)?;
        let out = linear(tape, ids, activated, &p("mlp.fc2"))?;
        x = tape.add(x, out)?;

        block_outputs.push(x);
    }

    Ok(EncoderTrace { embedded, block_outputs, attention })
}

/// Mean pooling over time, final layer norm, two-layer classifier head.
pub fn forward_logits<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    final_block: TensorId,
) -> Result<TensorId, ModelError> {
    let pooled = tape.mean_time(final_block)?;
    let normed = layer_norm(tape, ids, pooled, "final_norm")?;
    let hidden = linear(tape, ids, normed, "head.fc1")?;
    let activated = tape.gelu(hidden)?;
    Ok(linear(tape, ids, activated, "head.fc2")?)
}

/// Linear regression head mapping the student's final block output to the
/// target dimension during pretraining.
pub fn regression_predictions<F: Scalar>(
    tape: &mut Tape<F>,
    ids: &BTreeMap<String, TensorId>,
    final_block: TensorId,
) -> Result<TensorId, ModelError> {
    Ok(linear(tape, ids, final_block, "reg_head")?)
}

/// Forward-only classification: argmax over the logits of each batch item,
/// ties broken toward the lowest class index.
pub fn predict_classes<F: Scalar>(
    cfg: &KwtConfig,
    params: &crate::tensor::ParameterSet<F>,
    features: &Tensor<F>,
) -> Result<Vec<usize>, ModelError> {
    let mut tape: Tape<F> = Tape::new();
    let ids = tape.source_params(params);
    let feat = tape.leaf(features);
    let trace = encoder_forward(&mut tape, &ids, cfg, feat, None)?;
    let logits = forward_logits(&mut tape, &ids, trace.final_output())?;
    let values = tape.value(logits);
    let classes = cfg.n_classes;
    Ok(values
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}
