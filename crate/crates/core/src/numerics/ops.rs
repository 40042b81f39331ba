use super::{Matrix, Scalar};

/// Finite stand-in for −∞ in attention masks. Its exponential underflows to
/// exactly zero, so masked scores never produce NaN.
pub const MASK_SENTINEL: f64 = -1e30;

#[inline]
fn is_masked<T: Scalar>(x: T) -> bool {
    x <= T::lit(MASK_SENTINEL)
}

/// Row-wise softmax with max subtraction. Entries at or below
/// [`MASK_SENTINEL`] receive weight exactly zero.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let all_masked = row.iter().all(|&x| is_masked(x));
    let max = row.iter().copied().filter(|&x| all_masked || !is_masked(x)).fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = if !all_masked && is_masked(*x) { T::zero() } else { (*x - max).exp() };
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Layer normalization with population variance.
pub fn layer_norm<T: Scalar>(v: &[T], gain: &[T], bias: &[T], eps: T) -> Vec<T> {
    assert_eq!(v.len(), gain.len(), "layer_norm gain length");
    assert_eq!(v.len(), bias.len(), "layer_norm bias length");
    let mut out = vec![T::zero(); v.len()];
    layer_norm_into(v, gain, bias, eps, &mut out);
    out
}

/// Writes the normalized row into `out` and returns `(mean, 1/sqrt(var + eps))`.
pub(crate) fn layer_norm_into<T: Scalar>(v: &[T], gain: &[T], bias: &[T], eps: T, out: &mut [T]) -> (T, T) {
    let n = T::from_usize(v.len()).unwrap();
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    let rstd = T::one() / (var + eps).sqrt();
    for (((o, &x), &g), &b) in out.iter_mut().zip(v).zip(gain).zip(bias) {
        *o = (x - mean) * rstd * g + b;
    }
    (mean, rstd)
}

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    T::lit(0.5) * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Derivative of the exact GELU, `Φ(x) + x·φ(x)`.
#[inline]
pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * T::lit(0.5)).exp() * T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

pub fn gelu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| gelu_scalar(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn softmax_symmetric_row() {
        let m = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_rows(&m).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_mask_annihilates() {
        for x in [-50.0, 0.0, 3.5, 700.0] {
            let m = Matrix::from_vec(1, 2, vec![x, MASK_SENTINEL]).unwrap();
            assert_eq!(softmax_rows(&m).data(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn softmax_matches_direct_exponentials() {
        // e^1, e^2, e^3 normalized by hand.
        let (e1, e2, e3) = (1f64.exp(), 2f64.exp(), 3f64.exp());
        let s = e1 + e2 + e3;
        let expected = [e1 / s, e2 / s, e3 / s];
        let got = softmax_rows(&Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        for (g, e) in got.data().iter().zip(expected) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!((got.data()[0] - 0.0900).abs() < 5e-5);
        assert!((got.data()[1] - 0.2447).abs() < 5e-5);
        assert!((got.data()[2] - 0.6652).abs() < 5e-5);
    }

    #[test]
    fn layer_norm_edge_cases() {
        let out = layer_norm(&[3.0f64; 4], &[1.0; 4], &[0.0; 4], 1e-5);
        assert!(out.iter().all(|x| x.abs() < 1e-12));

        let out = layer_norm(&[-1.0f64, 1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-300);
        assert!((out[0] + 1.0).abs() < 1e-12 && (out[1] - 1.0).abs() < 1e-12);

        let out = layer_norm(&[1.0, -7.0, 2.5], &[0.0; 3], &[0.1, 0.2, 0.3], 1e-5);
        assert_eq!(out, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert!((gelu_scalar(10.0f64) - 10.0).abs() < 1e-6);
        let phi1 = Normal::new(0.0, 1.0).unwrap().cdf(1.0);
        let diff = (gelu_scalar(1.0f64) - phi1).abs();
        // The statrs normal CDF is accurate to about 1e-11.
        assert!(diff < 1e-10, "diff {diff}");
        assert!((gelu_scalar(1.0f64) - 0.84134).abs() < 1e-5);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for x in [-3.0f64, -0.7, 0.0, 0.4, 2.2] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((gelu_grad_scalar(x) - fd).abs() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in proptest::collection::vec(-30.0f64..30.0, 1..12)) {
            let n = row.len();
            let out = softmax_rows(&Matrix::from_vec(1, n, row).unwrap());
            let s: f64 = out.data().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn layer_norm_standardizes(v in proptest::collection::vec(-100.0f64..100.0, 2..40)) {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            // With eps = 1e-5 the output variance is var / (var + eps).
            prop_assume!(var > 10.0);
            let out = layer_norm(&v, &vec![1.0; n], &vec![0.0; n], 1e-5);
            let m = out.iter().sum::<f64>() / n as f64;
            let s2 = out.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(m.abs() <= 1e-10);
            prop_assert!((s2 - 1.0).abs() < 1e-6, "var {s2}");
        }
    }
}
