//! Float abstraction so the same graph code runs in f32 (training) and
//! f64 (gradient checking).

use std::fmt::Debug;
use std::iter::Sum;

/// Element type of tensors. f32 is the training mode, f64 exists for
/// finite-difference gradient checks.
pub trait Scalar: num_traits::Float + Sum + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Exact error function (not the tanh approximation).
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
