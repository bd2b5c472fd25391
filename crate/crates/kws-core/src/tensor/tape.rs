//! Forward operation recording and reverse traversal.
//!
//! Nodes are appended in execution order, so the record is topologically
//! sorted by construction and backward is a single reverse sweep. A tape
//! supports exactly one backward pass; afterwards it must be re-recorded.

use std::collections::BTreeMap;

use super::{ParameterSet, Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone)]
pub enum Op<F: Scalar> {
    Leaf,
    /// `a` is `[..batch, m, k]`; `b` is `[k, n]` (shared) or `[..batch, k, n]`.
    Matmul { a: usize, b: usize },
    Add { a: usize, b: usize },
    /// `y`'s shape is a suffix of `x`'s shape; `y` is tiled over the
    /// leading extents. Covers bias terms and positional encodings.
    AddBroadcast { x: usize, y: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: F },
    Gelu { x: usize },
    /// Last-axis softmax with max subtraction.
    Softmax { x: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: F },
    /// `[B, T, D] -> [B, H, T, D/H]`
    SplitHeads { x: usize, heads: usize },
    /// `[B, H, T, Dh] -> [B, T, H*Dh]`
    MergeHeads { x: usize },
    /// Swap the last two axes.
    TransposeLast { x: usize },
    /// `[B, T, D] -> [B, D]`, mean over the time axis.
    MeanTime { x: usize },
    Sum { x: usize },
    Mean { x: usize },
    /// Replace masked time steps of `[B, T, D]` with a learned `[D]` token.
    MaskReplace { x: usize, token: usize, mask: Vec<bool> },
    /// Mean negative log-softmax of the true class over the batch.
    CrossEntropy { logits: usize, labels: Vec<usize> },
    /// Mean squared error over selected positions (all when mask is None).
    MseMasked { pred: usize, target: usize, mask: Option<Vec<bool>> },
}

struct Node<F: Scalar> {
    data: Vec<F>,
    shape: Vec<usize>,
    grad: Option<Vec<F>>,
    op: Op<F>,
    needs_grad: bool,
}

pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
    consumed: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &[F] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar_value(&self, id: TensorId) -> F {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// Gradient of a node; `None` until backward has run or when the node
    /// does not participate in differentiation.
    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Copies the value of a node out as an owned tensor.
    pub fn tensor(&self, id: TensorId) -> Tensor<F> {
        Tensor::new(self.nodes[id.0].shape.clone(), self.nodes[id.0].data.clone()).unwrap()
    }

    /// Records a leaf from an owned tensor.
    pub fn leaf(&mut self, t: &Tensor<F>) -> TensorId {
        self.push_node(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, t.requires_grad)
    }

    /// Records a non-differentiable constant leaf.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<F>) -> Result<TensorId, TensorError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(shape_err("constant", format!("shape {shape:?} vs {} values", data.len())));
        }
        Ok(self.push_node(data, shape, Op::Leaf, false))
    }

    /// Sources every parameter as a leaf; returns name -> id.
    pub fn source_params(&mut self, params: &ParameterSet<F>) -> BTreeMap<String, TensorId> {
        params.iter().map(|(name, t)| (name.clone(), self.leaf(t))).collect()
    }

    /// Adds each sourced parameter's tape gradient into the parameter set.
    /// Parameters that never influenced the loss contribute zeros.
    pub fn accumulate_into(
        &self,
        ids: &BTreeMap<String, TensorId>,
        params: &mut ParameterSet<F>,
    ) {
        for (name, id) in ids {
            if let Some(t) = params.get_mut(name) {
                match self.grad(*id) {
                    Some(g) => t.accumulate_grad(g),
                    None => t.accumulate_grad(&vec![F::zero(); t.numel()]),
                }
            }
        }
    }

    fn push_node(&mut self, data: Vec<F>, shape: Vec<usize>, op: Op<F>, needs_grad: bool) -> TensorId {
        self.nodes.push(Node { data, shape, grad: None, op, needs_grad });
        TensorId(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        op_name: &'static str,
        data: Vec<F>,
        shape: Vec<usize>,
        op: Op<F>,
        needs_grad: bool,
    ) -> Result<TensorId, TensorError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        Ok(self.push_node(data, shape, op, needs_grad))
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- forward operations -------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if ash.len() < 2 || bsh.len() < 2 {
            return Err(shape_err("matmul", format!("{ash:?} x {bsh:?}: need >=2 dims")));
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (bk, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        if k != bk {
            return Err(shape_err("matmul", format!("inner extents {k} vs {bk}")));
        }
        let shared_b = bsh.len() == 2;
        if !shared_b && ash[..ash.len() - 2] != bsh[..bsh.len() - 2] {
            return Err(shape_err(
                "matmul",
                format!("batch extents {:?} vs {:?}", &ash[..ash.len() - 2], &bsh[..bsh.len() - 2]),
            ));
        }
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let mut out = vec![F::zero(); batch * m * n];
        {
            let adata = &self.nodes[a.0].data;
            let bdata = &self.nodes[b.0].data;
            for bi in 0..batch {
                let ao = bi * m * k;
                let bo = if shared_b { 0 } else { bi * k * n };
                let co = bi * m * n;
                for i in 0..m {
                    for p in 0..k {
                        let aip = adata[ao + i * k + p];
                        let brow = &bdata[bo + p * n..bo + p * n + n];
                        let crow = &mut out[co + i * n..co + i * n + n];
                        for (c, &bv) in crow.iter_mut().zip(brow) {
                            *c = *c + aip * bv;
                        }
                    }
                }
            }
        }
        let mut shape = ash[..ash.len() - 2].to_vec();
        shape.push(m);
        shape.push(n);
        let needs = self.needs(a) || self.needs(b);
        self.push_checked("matmul", out, shape, Op::Matmul { a: a.0, b: b.0 }, needs)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data: Vec<F> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let needs = self.needs(a) || self.needs(b);
        self.push_checked("add", data, shape, Op::Add { a: a.0, b: b.0 }, needs)
    }

    pub fn add_broadcast(&mut self, x: TensorId, y: TensorId) -> Result<TensorId, TensorError> {
        let (xsh, ysh) = (self.shape(x), self.shape(y));
        if ysh.is_empty() || ysh.len() > xsh.len() || !xsh.ends_with(ysh) {
            return Err(shape_err("add_broadcast", format!("{ysh:?} is not a suffix of {xsh:?}")));
        }
        let span: usize = ysh.iter().product();
        let data: Vec<F> = self.nodes[x.0]
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| v + self.nodes[y.0].data[i % span])
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x) || self.needs(y);
        self.push_checked("add_broadcast", data, shape, Op::AddBroadcast { x: x.0, y: y.0 }, needs)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data: Vec<F> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let needs = self.needs(a) || self.needs(b);
        self.push_checked("mul", data, shape, Op::Mul { a: a.0, b: b.0 }, needs)
    }

    pub fn scale(&mut self, x: TensorId, c: F) -> Result<TensorId, TensorError> {
        let data: Vec<F> = self.nodes[x.0].data.iter().map(|&v| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push_checked("scale", data, shape, Op::Scale { x: x.0, c }, needs)
    }

    pub fn gelu(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let half = F::from_f64(0.5);
        let inv_sqrt2 = F::from_f64(std::f64::consts::FRAC_1_SQRT_2);
        let data: Vec<F> = self.nodes[x.0]
            .data
            .iter()
            .map(|&v| half * v * (F::one() + (v * inv_sqrt2).erf()))
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let needs = self.needs(x);
        self.push_checked("gelu", data, shape, Op::Gelu { x: x.0 }, needs)
    }

    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        let width = *shape.last().ok_or_else(|| shape_err("softmax", "scalar input".into()))?;
        if width == 0 {
            return Err(shape_err("softmax", "empty last axis".into()));
        }
        if self.nodes[x.0].data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "softmax" });
        }
        let mut data = vec![F::zero(); self.nodes[x.0].data.len()];
        for (row_out, row_in) in data.chunks_mut(width).zip(self.nodes[x.0].data.chunks(width)) {
            let max = row_in.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                sum = sum + *o;
            }
            for o in row_out.iter_mut() {
                *o = *o / sum;
            }
        }
        let needs = self.needs(x);
        self.push_checked("softmax", data, shape, Op::Softmax { x: x.0 }, needs)
    }

    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: F,
    ) -> Result<TensorId, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        let width = *shape.last().ok_or_else(|| shape_err("layer_norm", "scalar input".into()))?;
        if width == 0 {
            return Err(shape_err("layer_norm", "empty last axis".into()));
        }
        if self.shape(gamma) != [width] || self.shape(beta) != [width] {
            return Err(shape_err(
                "layer_norm",
                format!("gamma/beta must be [{width}], got {:?}/{:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let inv_w = F::from_f64(1.0 / width as f64);
        let mut data = vec![F::zero(); self.nodes[x.0].data.len()];
        {
            let xd = &self.nodes[x.0].data;
            let gd = &self.nodes[gamma.0].data;
            let bd = &self.nodes[beta.0].data;
            for (row_out, row_in) in data.chunks_mut(width).zip(xd.chunks(width)) {
                let mean = row_in.iter().cloned().sum::<F>() * inv_w;
                let var = row_in.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_w;
                let inv_std = (var + eps).sqrt().recip();
                for ((o, &v), (&g, &b)) in row_out.iter_mut().zip(row_in).zip(gd.iter().zip(bd)) {
                    *o = (v - mean) * inv_std * g + b;
                }
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push_checked(
            "layer_norm",
            data,
            shape,
            Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, eps },
            needs,
        )
    }

    pub fn split_heads(&mut self, x: TensorId, heads: usize) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].shape.clone();
        if sh.len() != 3 {
            return Err(shape_err("split_heads", format!("expected [B,T,D], got {sh:?}")));
        }
        let (b, t, d) = (sh[0], sh[1], sh[2]);
        if heads == 0 || d % heads != 0 {
            return Err(shape_err("split_heads", format!("dim {d} not divisible by {heads} heads")));
        }
        let dh = d / heads;
        let mut data = vec![F::zero(); b * t * d];
        {
            let xd = &self.nodes[x.0].data;
            for bi in 0..b {
                for hi in 0..heads {
                    for ti in 0..t {
                        let src = bi * t * d + ti * d + hi * dh;
                        let dst = ((bi * heads + hi) * t + ti) * dh;
                        data[dst..dst + dh].copy_from_slice(&xd[src..src + dh]);
                    }
                }
            }
        }
        let needs = self.needs(x);
        self.push_checked("split_heads", data, vec![b, heads, t, dh], Op::SplitHeads { x: x.0, heads }, needs)
    }

    pub fn merge_heads(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].shape.clone();
        if sh.len() != 4 {
            return Err(shape_err("merge_heads", format!("expected [B,H,T,Dh], got {sh:?}")));
        }
        let (b, h, t, dh) = (sh[0], sh[1], sh[2], sh[3]);
        let d = h * dh;
        let mut data = vec![F::zero(); b * t * d];
        {
            let xd = &self.nodes[x.0].data;
            for bi in 0..b {
                for hi in 0..h {
                    for ti in 0..t {
                        let src = ((bi * h + hi) * t + ti) * dh;
                        let dst = bi * t * d + ti * d + hi * dh;
                        data[dst..dst + dh].copy_from_slice(&xd[src..src + dh]);
                    }
                }
            }
        }
        let needs = self.needs(x);
        self.push_checked("merge_heads", data, vec![b, t, d], Op::MergeHeads { x: x.0 }, needs)
    }

    pub fn transpose_last(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].shape.clone();
        if sh.len() < 2 {
            return Err(shape_err("transpose_last", format!("expected >=2 dims, got {sh:?}")));
        }
        let (m, n) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        let batch: usize = sh[..sh.len() - 2].iter().product();
        let mut data = vec![F::zero(); batch * m * n];
        {
            let xd = &self.nodes[x.0].data;
            for bi in 0..batch {
                let o = bi * m * n;
                for i in 0..m {
                    for j in 0..n {
                        data[o + j * m + i] = xd[o + i * n + j];
                    }
                }
            }
        }
        let mut shape = sh[..sh.len() - 2].to_vec();
        shape.push(n);
        shape.push(m);
        let needs = self.needs(x);
        self.push_checked("transpose_last", data, shape, Op::TransposeLast { x: x.0 }, needs)
    }

    pub fn mean_time(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].shape.clone();
        if sh.len() != 3 {
            return Err(shape_err("mean_time", format!("expected [B,T,D], got {sh:?}")));
        }
        let (b, t, d) = (sh[0], sh[1], sh[2]);
        let inv_t = F::from_f64(1.0 / t as f64);
        let mut data = vec![F::zero(); b * d];
        {
            let xd = &self.nodes[x.0].data;
            for bi in 0..b {
                for ti in 0..t {
                    let src = bi * t * d + ti * d;
                    let dst = bi * d;
                    for di in 0..d {
                        data[dst + di] = data[dst + di] + xd[src + di];
                    }
                }
                for di in 0..d {
                    data[bi * d + di] = data[bi * d + di] * inv_t;
                }
            }
        }
        let needs = self.needs(x);
        self.push_checked("mean_time", data, vec![b, d], Op::MeanTime { x: x.0 }, needs)
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let total = self.nodes[x.0].data.iter().cloned().sum::<F>();
        let needs = self.needs(x);
        self.push_checked("sum", vec![total], vec![], Op::Sum { x: x.0 }, needs)
    }

    pub fn mean(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let n = self.nodes[x.0].data.len();
        if n == 0 {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let total = self.nodes[x.0].data.iter().cloned().sum::<F>() * F::from_f64(1.0 / n as f64);
        let needs = self.needs(x);
        self.push_checked("mean", vec![total], vec![], Op::Mean { x: x.0 }, needs)
    }

    pub fn mask_replace(
        &mut self,
        x: TensorId,
        token: TensorId,
        mask: &[bool],
    ) -> Result<TensorId, TensorError> {
        let sh = self.nodes[x.0].shape.clone();
        if sh.len() != 3 {
            return Err(shape_err("mask_replace", format!("expected [B,T,D], got {sh:?}")));
        }
        let (b, t, d) = (sh[0], sh[1], sh[2]);
        if self.shape(token) != [d] {
            return Err(shape_err(
                "mask_replace",
                format!("token must be [{d}], got {:?}", self.shape(token)),
            ));
        }
        if mask.len() != b * t {
            return Err(shape_err("mask_replace", format!("mask len {} != {}", mask.len(), b * t)));
        }
        let mut data = self.nodes[x.0].data.clone();
        {
            let tok = &self.nodes[token.0].data;
            for (pos, &masked) in mask.iter().enumerate() {
                if masked {
                    data[pos * d..pos * d + d].copy_from_slice(tok);
                }
            }
        }
        let needs = self.needs(x) || self.needs(token);
        self.push_checked(
            "mask_replace",
            data,
            sh,
            Op::MaskReplace { x: x.0, token: token.0, mask: mask.to_vec() },
            needs,
        )
    }

    pub fn cross_entropy(&mut self, logits: TensorId, labels: &[usize]) -> Result<TensorId, TensorError> {
        let sh = self.nodes[logits.0].shape.clone();
        if sh.len() != 2 {
            return Err(shape_err("cross_entropy", format!("expected [B,C], got {sh:?}")));
        }
        let (b, c) = (sh[0], sh[1]);
        if labels.len() != b {
            return Err(shape_err("cross_entropy", format!("{} labels for batch {b}", labels.len())));
        }
        for &l in labels {
            if l >= c {
                return Err(TensorError::LabelOutOfRange { label: l, classes: c });
            }
        }
        let mut total = F::zero();
        for (row, &label) in self.nodes[logits.0].data.chunks(c).zip(labels) {
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
            total = total - (row[label] - max - log_sum);
        }
        let loss = total * F::from_f64(1.0 / b as f64);
        let needs = self.needs(logits);
        self.push_checked(
            "cross_entropy",
            vec![loss],
            vec![],
            Op::CrossEntropy { logits: logits.0, labels: labels.to_vec() },
            needs,
        )
    }

    pub fn mse_masked(
        &mut self,
        pred: TensorId,
        target: TensorId,
        mask: Option<&[bool]>,
    ) -> Result<TensorId, TensorError> {
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err(
                "mse",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let sh = self.nodes[pred.0].shape.clone();
        let width = if sh.len() >= 2 { sh[sh.len() - 1] } else { 1 };
        let positions = self.nodes[pred.0].data.len() / width.max(1);
        if let Some(m) = mask {
            if m.len() != positions {
                return Err(shape_err("mse", format!("mask len {} != {positions} positions", m.len())));
            }
            if !m.iter().any(|&v| v) {
                return Err(TensorError::EmptyMask { op: "mse" });
            }
        }
        let selected = mask.map_or(positions, |m| m.iter().filter(|&&v| v).count());
        let count = F::from_f64(1.0 / (selected * width) as f64);
        let mut total = F::zero();
        {
            let pd = &self.nodes[pred.0].data;
            let td = &self.nodes[target.0].data;
            for pos in 0..positions {
                if mask.map_or(true, |m| m[pos]) {
                    for i in pos * width..(pos + 1) * width {
                        let diff = pd[i] - td[i];
                        total = total + diff * diff;
                    }
                }
            }
        }
        let needs = self.needs(pred) || self.needs(target);
        self.push_checked(
            "mse",
            vec![total * count],
            vec![],
            Op::MseMasked { pred: pred.0, target: target.0, mask: mask.map(|m| m.to_vec()) },
            needs,
        )
    }

    // ---- backward ------------------------------------------------------

    /// Reverse sweep from a scalar loss. Populates gradients of every node
    /// that requires them; gradients accumulate additively across fan-out.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::NotScalar { op: "backward" });
        }
        self.consumed = true;
        for node in &mut self.nodes {
            if node.needs_grad {
                node.grad = Some(vec![F::zero(); node.data.len()]);
            }
        }
        if self.nodes[loss.0].grad.is_none() {
            // Loss does not depend on any differentiable input; nothing to do.
            return Ok(());
        }
        self.nodes[loss.0].grad.as_mut().unwrap()[0] = F::one();

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let grad = match &self.nodes[i].grad {
                Some(g) => g.clone(),
                None => continue,
            };
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b } => self.backward_matmul(i, a, b, &grad),
                Op::Add { a, b } => {
                    self.add_to_grad(a, &grad);
                    self.add_to_grad(b, &grad);
                }
                Op::AddBroadcast { x, y } => {
                    self.add_to_grad(x, &grad);
                    if self.nodes[y].needs_grad {
                        let span = self.nodes[y].data.len();
                        let mut gy = vec![F::zero(); span];
                        for (idx, &g) in grad.iter().enumerate() {
                            gy[idx % span] = gy[idx % span] + g;
                        }
                        self.add_to_grad(y, &gy);
                    }
                }
                Op::Mul { a, b } => {
                    if self.nodes[a].needs_grad {
                        let ga: Vec<F> =
                            grad.iter().zip(&self.nodes[b].data).map(|(&g, &v)| g * v).collect();
                        self.add_to_grad(a, &ga);
                    }
                    if self.nodes[b].needs_grad {
                        let gb: Vec<F> =
                            grad.iter().zip(&self.nodes[a].data).map(|(&g, &v)| g * v).collect();
                        self.add_to_grad(b, &gb);
                    }
                }
                Op::Scale { x, c } => {
                    let gx: Vec<F> = grad.iter().map(|&g| g * c).collect();
                    self.add_to_grad(x, &gx);
                }
                Op::Gelu { x } => {
                    let half = F::from_f64(0.5);
                    let inv_sqrt2 = F::from_f64(std::f64::consts::FRAC_1_SQRT_2);
                    let inv_sqrt_tau = F::from_f64(1.0 / (std::f64::consts::TAU).sqrt());
                    let gx: Vec<F> = grad
                        .iter()
                        .zip(&self.nodes[x].data)
                        .map(|(&g, &v)| {
                            let cdf = half * (F::one() + (v * inv_sqrt2).erf());
                            let pdf = inv_sqrt_tau * (-half * v * v).exp();
                            g * (cdf + v * pdf)
                        })
                        .collect();
                    self.add_to_grad(x, &gx);
                }
                Op::Softmax { x } => {
                    let width = *self.nodes[i].shape.last().unwrap();
                    let out = self.nodes[i].data.clone();
                    let mut gx = vec![F::zero(); out.len()];
                    for ((gx_row, s_row), g_row) in
                        gx.chunks_mut(width).zip(out.chunks(width)).zip(grad.chunks(width))
                    {
                        let dot = g_row.iter().zip(s_row).map(|(&g, &s)| g * s).sum::<F>();
                        for ((o, &s), &g) in gx_row.iter_mut().zip(s_row).zip(g_row) {
                            *o = s * (g - dot);
                        }
                    }
                    self.add_to_grad(x, &gx);
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    self.backward_layer_norm(x, gamma, beta, eps, &grad);
                }
                Op::SplitHeads { x, heads } => {
                    // inverse permutation of the forward copy
                    let sh = &self.nodes[i].shape;
                    let (b, h, t, dh) = (sh[0], sh[1], sh[2], sh[3]);
                    let _ = heads;
                    let d = h * dh;
                    let mut gx = vec![F::zero(); b * t * d];
                    for bi in 0..b {
                        for hi in 0..h {
                            for ti in 0..t {
                                let src = ((bi * h + hi) * t + ti) * dh;
                                let dst = bi * t * d + ti * d + hi * dh;
                                gx[dst..dst + dh].copy_from_slice(&grad[src..src + dh]);
                            }
                        }
                    }
                    self.add_to_grad(x, &gx);
                }
                Op::MergeHeads { x } => {
                    let sh = self.nodes[x].shape.clone();
                    let (b, h, t, dh) = (sh[0], sh[1], sh[2], sh[3]);
                    let d = h * dh;
                    let mut gx = vec![F::zero(); b * h * t * dh];
                    for bi in 0..b {
                        for hi in 0..h {
                            for ti in 0..t {
                                let dst = ((bi * h + hi) * t + ti) * dh;
                                let src = bi * t * d + ti * d + hi * dh;
                                gx[dst..dst + dh].copy_from_slice(&grad[src..src + dh]);
                            }
                        }
                    }
                    self.add_to_grad(x, &gx);
                }
                Op::TransposeLast { x } => {
                    let sh = &self.nodes[i].shape;
                    let (n, m) = (sh[sh.len() - 2], sh[sh.len() - 1]);
                    let batch: usize = sh[..sh.len() - 2].iter().product();
                    let mut gx = vec![F::zero(); grad.len()];
                    for bi in 0..batch {
                        let o = bi * m * n;
                        for j in 0..n {
                            for ii in 0..m {
                                gx[o + ii * n + j] = grad[o + j * m + ii];
                            }
                        }
                    }
                    self.add_to_grad(x, &gx);
                }
                Op::MeanTime { x } => {
                    let sh = self.nodes[x].shape.clone();
                    let (b, t, d) = (sh[0], sh[1], sh[2]);
                    let inv_t = F::from_f64(1.0 / t as f64);
                    let mut gx = vec![F::zero(); b * t * d];
                    for bi in 0..b {
                        for ti in 0..t {
                            for di in 0..d {
                                gx[bi * t * d + ti * d + di] = grad[bi * d + di] * inv_t;
                            }
                        }
                    }
                    self.add_to_grad(x, &gx);
                }
                Op::Sum { x } => {
                    let gx = vec![grad[0]; self.nodes[x].data.len()];
                    self.add_to_grad(x, &gx);
                }
                Op::Mean { x } => {
                    let n = self.nodes[x].data.len();
                    let g = grad[0] * F::from_f64(1.0 / n as f64);
                    let gx = vec![g; n];
                    self.add_to_grad(x, &gx);
                }
                Op::MaskReplace { x, token, mask } => {
                    let d = *self.nodes[i].shape.last().unwrap();
                    if self.nodes[x].needs_grad {
                        let mut gx = grad.clone();
                        for (pos, &masked) in mask.iter().enumerate() {
                            if masked {
                                gx[pos * d..pos * d + d].iter_mut().for_each(|v| *v = F::zero());
                            }
                        }
                        self.add_to_grad(x, &gx);
                    }
                    if self.nodes[token].needs_grad {
                        let mut gt = vec![F::zero(); d];
                        for (pos, &masked) in mask.iter().enumerate() {
                            if masked {
                                for di in 0..d {
                                    gt[di] = gt[di] + grad[pos * d + di];
                                }
                            }
                        }
                        self.add_to_grad(token, &gt);
                    }
                }
                Op::CrossEntropy { logits, labels } => {
                    let c = self.nodes[logits].shape[1];
                    let b = labels.len();
                    let scale = grad[0] * F::from_f64(1.0 / b as f64);
                    let mut gx = vec![F::zero(); b * c];
                    for (bi, (row, &label)) in
                        self.nodes[logits].data.chunks(c).zip(&labels).enumerate()
                    {
                        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
                        let sum = row.iter().map(|&v| (v - max).exp()).sum::<F>();
                        for (ci, &v) in row.iter().enumerate() {
                            let p = (v - max).exp() / sum;
                            let indicator = if ci == label { F::one() } else { F::zero() };
                            gx[bi * c + ci] = scale * (p - indicator);
                        }
                    }
                    self.add_to_grad(logits, &gx);
                }
                Op::MseMasked { pred, target, mask } => {
                    let sh = &self.nodes[pred].shape;
                    let width = if sh.len() >= 2 { sh[sh.len() - 1] } else { 1 };
                    let positions = self.nodes[pred].data.len() / width.max(1);
                    let selected =
                        mask.as_ref().map_or(positions, |m| m.iter().filter(|&&v| v).count());
                    let scale = grad[0] * F::from_f64(2.0 / (selected * width) as f64);
                    let mut gp = vec![F::zero(); self.nodes[pred].data.len()];
                    for pos in 0..positions {
                        if mask.as_ref().map_or(true, |m| m[pos]) {
                            for idx in pos * width..(pos + 1) * width {
                                gp[idx] = scale
                                    * (self.nodes[pred].data[idx] - self.nodes[target].data[idx]);
                            }
                        }
                    }
                    if self.nodes[target].needs_grad {
                        let gt: Vec<F> = gp.iter().map(|&v| -v).collect();
                        self.add_to_grad(target, &gt);
                    }
                    self.add_to_grad(pred, &gp);
                }
            }
        }
        Ok(())
    }

    fn add_to_grad(&mut self, node: usize, delta: &[F]) {
        if !self.nodes[node].needs_grad {
            return;
        }
        let grad = self.nodes[node].grad.as_mut().expect("grad allocated for needs_grad node");
        for (g, &d) in grad.iter_mut().zip(delta) {
            *g = *g + d;
        }
    }

    fn backward_matmul(&mut self, out: usize, a: usize, b: usize, grad: &[F]) {
        let ash = self.nodes[a].shape.clone();
        let bsh = self.nodes[b].shape.clone();
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let n = bsh[bsh.len() - 1];
        let shared_b = bsh.len() == 2;
        let batch: usize = ash[..ash.len() - 2].iter().product();
        let _ = out;
        if self.nodes[a].needs_grad {
            // dA = dC . B^T
            let mut ga = vec![F::zero(); batch * m * k];
            let bdata = &self.nodes[b].data;
            for bi in 0..batch {
                let co = bi * m * n;
                let bo = if shared_b { 0 } else { bi * k * n };
                let ao = bi * m * k;
                for i in 0..m {
                    for p in 0..k {
                        let brow = &bdata[bo + p * n..bo + p * n + n];
                        let crow = &grad[co + i * n..co + i * n + n];
                        let mut s = F::zero();
                        for (&g, &bv) in crow.iter().zip(brow) {
                            s = s + g * bv;
                        }
                        ga[ao + i * k + p] = s;
                    }
                }
            }
            self.add_to_grad(a, &ga);
        }
        if self.nodes[b].needs_grad {
            // dB = A^T . dC, summed over the batch when B is shared
            let len = self.nodes[b].data.len();
            let mut gb = vec![F::zero(); len];
            let adata = &self.nodes[a].data;
            for bi in 0..batch {
                let co = bi * m * n;
                let bo = if shared_b { 0 } else { bi * k * n };
                let ao = bi * m * k;
                for p in 0..k {
                    for i in 0..m {
                        let aip = adata[ao + i * k + p];
                        let crow = &grad[co + i * n..co + i * n + n];
                        let brow = &mut gb[bo + p * n..bo + p * n + n];
                        for (gbv, &g) in brow.iter_mut().zip(crow) {
                            *gbv = *gbv + aip * g;
                        }
                    }
                }
            }
            self.add_to_grad(b, &gb);
        }
    }

    fn backward_layer_norm(&mut self, x: usize, gamma: usize, beta: usize, eps: F, grad: &[F]) {
        let width = *self.nodes[x].shape.last().unwrap();
        let inv_w = F::from_f64(1.0 / width as f64);
        let xd = self.nodes[x].data.clone();
        let gd = self.nodes[gamma].data.clone();

        let mut gx = vec![F::zero(); xd.len()];
        let mut ggamma = vec![F::zero(); width];
        let mut gbeta = vec![F::zero(); width];

        for ((x_row, g_row), gx_row) in
            xd.chunks(width).zip(grad.chunks(width)).zip(gx.chunks_mut(width))
        {
            let mean = x_row.iter().cloned().sum::<F>() * inv_w;
            let var = x_row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_w;
            let inv_std = (var + eps).sqrt().recip();

            // dxh = dy * gamma; dx = inv_std * (dxh - mean(dxh) - xh * mean(dxh*xh))
            let mut mean_dxh = F::zero();
            let mut mean_dxh_xh = F::zero();
            for ((&xv, &gy), &g) in x_row.iter().zip(g_row).zip(gd.iter()) {
                let xh = (xv - mean) * inv_std;
                let dxh = gy * g;
                mean_dxh = mean_dxh + dxh;
                mean_dxh_xh = mean_dxh_xh + dxh * xh;
            }
            mean_dxh = mean_dxh * inv_w;
            mean_dxh_xh = mean_dxh_xh * inv_w;

            for (j, (o, &xv)) in gx_row.iter_mut().zip(x_row).enumerate() {
                let xh = (xv - mean) * inv_std;
                let dxh = g_row[j] * gd[j];
                *o = inv_std * (dxh - mean_dxh - xh * mean_dxh_xh);
                ggamma[j] = ggamma[j] + g_row[j] * xh;
                gbeta[j] = gbeta[j] + g_row[j];
            }
        }
        self.add_to_grad(x, &gx);
        if self.nodes[gamma].needs_grad {
            self.add_to_grad(gamma, &ggamma);
        }
        if self.nodes[beta].needs_grad {
            self.add_to_grad(beta, &gbeta);
        }
    }
}
