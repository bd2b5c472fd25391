//! Exponential-moving-average teacher maintenance.

use crate::model::is_teacher_param;
use crate::scalar::Scalar;
use crate::tensor::ParameterSet;

use super::PretrainError;

/// Copies the mirrored subset (input projection + encoder blocks) out of the
/// student. The mask token and regression head stay student-only; the
/// classifier head does not exist during pretraining.
pub fn make_teacher<F: Scalar>(student: &ParameterSet<F>) -> ParameterSet<F> {
    let mut teacher = ParameterSet::new();
    for (name, tensor) in student.iter() {
        if is_teacher_param(name) {
            teacher.insert(name.clone(), tensor.clone());
        }
    }
    teacher
}

/// Elementwise `delta <- tau * delta + (1 - tau) * theta` over every teacher
/// parameter. The student must supply a matching tensor for each.
pub fn ema_update<F: Scalar>(
    teacher: &mut ParameterSet<F>,
    student: &ParameterSet<F>,
    tau: f64,
) -> Result<(), PretrainError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(PretrainError::TauOutOfRange(tau));
    }
    for (name, delta) in teacher.iter_mut() {
        let theta = student.get(name).ok_or_else(|| PretrainError::Mismatch {
            name: name.clone(),
            detail: "missing from student".into(),
        })?;
        if theta.shape() != delta.shape() {
            return Err(PretrainError::Mismatch {
                name: name.clone(),
                detail: format!("shape {:?} vs {:?}", delta.shape(), theta.shape()),
            });
        }
        for (d, &t) in delta.data_mut().iter_mut().zip(theta.data()) {
            *d = F::from_f64(tau * d.to_f64() + (1.0 - tau) * t.to_f64());
        }
    }
    Ok(())
}
