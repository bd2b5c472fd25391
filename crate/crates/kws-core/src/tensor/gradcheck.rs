//! Numerical verification of analytic gradients by central differences.

use rayon::prelude::*;

use super::{ParameterSet, TensorError};

/// Outcome of a full gradient check; `max_rel_err` is the headline number.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub n_checked: usize,
}

/// Compares the analytic gradients stored in `params` against central
/// differences of `forward` with step `h`, coordinate by coordinate.
///
/// The relative error for a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-5)`. The floor keeps
/// near-zero gradients from blowing up the ratio and is sized to the noise
/// floor of the estimator itself: a central difference of a unit-scale loss
/// carries ~1e-10 of absolute f64 roundoff at the step sizes used here, so
/// coordinates whose true gradient sits below the floor can only be verified
/// in absolute terms. A genuinely wrong gradient at such a coordinate still
/// registers orders of magnitude above the floor. All checks run in f64.
pub fn grad_check<L>(
    params: &ParameterSet<f64>,
    forward: L,
    h: f64,
) -> Result<GradCheckReport, TensorError>
where
    L: Fn(&ParameterSet<f64>) -> Result<f64, TensorError> + Sync,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(TensorError::InvalidStep);
    }
    let mut coords: Vec<(&str, usize, f64)> = Vec::new();
    for (name, tensor) in params.iter() {
        let grad = tensor.grad().ok_or_else(|| TensorError::ShapeMismatch {
            op: "grad_check",
            detail: format!("parameter '{name}' has no gradient; run backward first"),
        })?;
        for (idx, &g) in grad.iter().enumerate() {
            coords.push((name, idx, g));
        }
    }

    let per_coord: Result<Vec<(f64, &str, usize)>, TensorError> = coords
        .par_iter()
        .map_init(
            || params.clone(),
            |local, &(name, idx, analytic)| {
                let orig = local.get(name).unwrap().data()[idx];
                local.get_mut(name).unwrap().data_mut()[idx] = orig + h;
                let f_plus = forward(local)?;
                local.get_mut(name).unwrap().data_mut()[idx] = orig - h;
                let f_minus = forward(local)?;
                local.get_mut(name).unwrap().data_mut()[idx] = orig;
                let numeric = (f_plus - f_minus) / (2.0 * h);
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-5);
                Ok((rel, name, idx))
            },
        )
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        n_checked: 0,
    };
    for (rel, name, idx) in per_coord? {
        report.n_checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_param = name.to_string();
            report.worst_index = idx;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    /// loss(w) = sum(w .* w) has gradient 2w everywhere.
    fn quadratic_loss(params: &ParameterSet<f64>) -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids = tape.source_params(params);
        let w = ids["w"];
        let sq = tape.mul(w, w)?;
        let loss = tape.sum(sq)?;
        Ok(tape.scalar_value(loss))
    }

    #[test]
    fn quadratic_gradient_verifies() {
        let mut params = ParameterSet::new();
        params.insert("w", Tensor::param(vec![3], vec![0.5, -1.25, 2.0]).unwrap());

        let mut tape = Tape::new();
        let ids = tape.source_params(&params);
        let sq = tape.mul(ids["w"], ids["w"]).unwrap();
        let loss = tape.sum(sq).unwrap();
        tape.backward(loss).unwrap();
        tape.accumulate_into(&ids, &mut params);

        let report = grad_check(&params, quadratic_loss, 1e-5).unwrap();
        assert_eq!(report.n_checked, 3);
        assert!(report.max_rel_err < 1e-8, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut params = ParameterSet::new();
        params.insert("w", Tensor::param(vec![2], vec![1.0, 2.0]).unwrap());
        // plant a wrong analytic gradient: true is [2, 4]
        params.get_mut("w").unwrap().accumulate_grad(&[2.0, 40.0]);
        let report = grad_check(&params, quadratic_loss, 1e-5).unwrap();
        assert!(report.max_rel_err > 0.5);
        assert_eq!(report.worst_param, "w");
        assert_eq!(report.worst_index, 1);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let params = ParameterSet::<f64>::new();
        assert!(matches!(grad_check(&params, quadratic_loss, 0.0), Err(TensorError::InvalidStep)));
        assert!(matches!(grad_check(&params, quadratic_loss, -1e-5), Err(TensorError::InvalidStep)));
        assert!(matches!(
            grad_check(&params, quadratic_loss, f64::NAN),
            Err(TensorError::InvalidStep)
        ));
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut params = ParameterSet::new();
        params.insert("w", Tensor::param(vec![1], vec![1.0]).unwrap());
        assert!(grad_check(&params, quadratic_loss, 1e-5).is_err());
    }
}
