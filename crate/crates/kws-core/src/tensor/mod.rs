//! Dense row-major tensors with a tape-based reverse-mode autodiff engine.
//!
//! The surface is deliberately small: exactly the operations the keyword
//! transformer and its losses need. Shapes are static per graph, there is
//! no broadcasting beyond a shared right-hand side in [`Tape::matmul`] and
//! suffix-shaped operands in [`Tape::add_broadcast`].

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Op, Tape, TensorId};

use std::collections::BTreeMap;

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("{op}: expected a scalar")]
    NotScalar { op: &'static str },
    #[error("backward already ran on this tape; record a new graph first")]
    TapeConsumed,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{op}: mask selects zero positions")]
    EmptyMask { op: &'static str },
    #[error("gradient check step must be positive")]
    InvalidStep,
}

/// Owned tensor value: flat row-major buffer plus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
    pub requires_grad: bool,
    grad: Option<Vec<F>>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(TensorError::ShapeMismatch {
                op: "tensor_new",
                detail: format!("shape {:?} needs {} elements, got {}", shape, numel, data.len()),
            });
        }
        Ok(Self { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![F::zero(); numel], requires_grad: false, grad: None }
    }

    pub fn scalar(value: F) -> Self {
        Self { shape: vec![], data: vec![value], requires_grad: false, grad: None }
    }

    /// Marks the tensor as a trainable parameter.
    pub fn param(shape: Vec<usize>, data: Vec<F>) -> Result<Self, TensorError> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn grad(&self) -> Option<&[F]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient buffer, allocating zeros on first use.
    pub fn accumulate_grad(&mut self, delta: &[F]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let grad = self.grad.get_or_insert_with(|| vec![F::zero(); self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g = *g + *d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = F::zero());
        }
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }
}

/// Named parameter store with deterministic (lexicographic) iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet<F: Scalar> {
    tensors: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<F>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<F>> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn cast<G: Scalar>(&self) -> ParameterSet<G> {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}
