//! Fixed sinusoidal positional encodings.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// T x d matrix with PE(t, 2i) = sin(t / 10000^(2i/d)) and
/// PE(t, 2i+1) = cos(t / 10000^(2i/d)). Added to projected inputs.
pub fn positional_encoding<F: Scalar>(t_len: usize, dim: usize) -> Tensor<F> {
    let mut data = Vec::with_capacity(t_len * dim);
    for t in 0..t_len {
        for i in 0..dim {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
            data.push(F::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![t_len, dim], data).expect("shape matches construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_zero_alternates_zero_one() {
        let pe = positional_encoding::<f64>(3, 8);
        for i in 0..8 {
            let v = pe.data()[i];
            if i % 2 == 0 {
                assert_eq!(v, 0.0);
            } else {
                assert_eq!(v, 1.0);
            }
        }
    }

    #[test]
    fn first_coefficient_is_sin_of_t() {
        for dim in [4, 16, 64, 192] {
            let pe = positional_encoding::<f64>(3, dim);
            assert!((pe.data()[dim] - 1f64.sin()).abs() < 1e-12, "dim {dim}");
            assert!((pe.data()[2 * dim] - 2f64.sin()).abs() < 1e-12, "dim {dim}");
        }
        // sin(1) = 0.84147...
        let pe = positional_encoding::<f32>(2, 64);
        assert!((pe.data()[64] - 0.84147).abs() < 1e-5);
    }

    #[test]
    fn all_entries_within_unit_range() {
        let pe = positional_encoding::<f64>(98, 64);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn distinct_rows_for_distinct_times() {
        let pe = positional_encoding::<f64>(98, 40);
        for t in 1..98 {
            assert_ne!(&pe.data()[t * 40..(t + 1) * 40], &pe.data()[0..40], "row {t}");
        }
    }
}
