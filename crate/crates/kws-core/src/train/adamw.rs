//! AdamW with decoupled weight decay.

use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::tensor::{ParameterSet, TensorError};

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second moment state per parameter, keyed by name. Moments are kept
/// in f64 regardless of the parameter dtype so long runs stay stable.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    state: BTreeMap<String, Moments>,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            state: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter with a gradient:
    /// `theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
    pub fn step<F: Scalar>(
        &mut self,
        params: &mut ParameterSet<F>,
        lr: f64,
    ) -> Result<(), TensorError> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.cfg.beta1.powi(t);
        let bc2 = 1.0 - self.cfg.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let grad = tensor.grad().ok_or_else(|| TensorError::ShapeMismatch {
                op: "adamw",
                detail: format!("parameter {name} has no gradient"),
            })?;
            let grad: Vec<f64> = grad.iter().map(|&g| g.to_f64()).collect();
            let entry = self.state.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
            });
            if entry.m.len() != grad.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adamw",
                    detail: format!(
                        "parameter {name} changed size: state {} vs grad {}",
                        entry.m.len(),
                        grad.len()
                    ),
                });
            }
            let data = tensor.data_mut();
            for i in 0..grad.len() {
                let g = grad[i];
                entry.m[i] = self.cfg.beta1 * entry.m[i] + (1.0 - self.cfg.beta1) * g;
                entry.v[i] = self.cfg.beta2 * entry.v[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = entry.m[i] / bc1;
                let v_hat = entry.v[i] / bc2;
                let theta = data[i].to_f64();
                let update = m_hat / (v_hat.sqrt() + self.cfg.eps)
                    + self.cfg.weight_decay * theta;
                data[i] = F::from_f64(theta - lr * update);
            }
        }
        Ok(())
    }
}
