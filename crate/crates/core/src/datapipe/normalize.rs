use crate::numerics::Scalar;

use super::window::WindowSample;

/// Lower bound applied to window standard deviations. Pre-fault windows are
/// flat, so an unclamped σ would divide by zero.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Mean and clamped population standard deviation.
pub fn window_stats<T: Scalar>(input: &[T]) -> (T, T) {
    let n = T::from_usize(input.len()).unwrap();
    // Shifting by the first sample makes the mean of a flat window exact.
    let x0 = input[0];
    let mu = x0 + input.iter().map(|&x| x - x0).sum::<T>() / n;
    let var = input.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() / n;
    (mu, var.sqrt().max(T::lit(SIGMA_FLOOR)))
}

/// Standardizes `input`, returning the normalized values and `(μ, σ)`.
pub fn normalize_input<T: Scalar>(input: &[T]) -> (Vec<T>, T, T) {
    let (mu, sigma) = window_stats(input);
    (input.iter().map(|&x| (x - mu) / sigma).collect(), mu, sigma)
}

/// Normalizes the input portion of a raw window; the target stays physical.
pub fn normalize<T: Scalar>(sample: &WindowSample<T>) -> WindowSample<T> {
    let (input, mu, sigma) = normalize_input(&sample.input);
    WindowSample { input, target: sample.target.clone(), mu, sigma, origin: sample.origin }
}

pub fn denormalize<T: Scalar>(pred: &[T], mu: T, sigma: T) -> Vec<T> {
    pred.iter().map(|&p| sigma * p + mu).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::WindowOrigin;
    use proptest::prelude::*;

    fn raw(input: Vec<f64>) -> WindowSample<f64> {
        WindowSample { input, target: vec![9.0], mu: 0.0, sigma: 1.0, origin: WindowOrigin::default() }
    }

    #[test]
    fn three_point_example() {
        let s = normalize(&raw(vec![1.0, 2.0, 3.0]));
        assert_eq!(s.mu, 2.0);
        assert!((s.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        for (got, want) in s.input.iter().zip([-z, 0.0, z]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((s.input[0] + 1.2247).abs() < 1e-4);
        assert_eq!(s.target, vec![9.0]);
    }

    #[test]
    fn constant_window_clamps_sigma() {
        let s = normalize(&raw(vec![0.7; 10]));
        assert_eq!(s.sigma, SIGMA_FLOOR);
        assert!(s.input.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn denormalize_examples() {
        assert_eq!(denormalize(&[0.0], 3.5, 2.0), vec![3.5]);
        assert_eq!(denormalize(&[1.5], 0.0, 2.0), vec![3.0]);
    }

    proptest! {
        #[test]
        fn affine_invariance(xs in proptest::collection::vec(-50.0f64..50.0, 4..40), a in 0.1f64..10.0, b in -100.0f64..100.0) {
            let (_, mu, sigma) = normalize_input(&xs);
            prop_assume!(sigma > 1e-3 * (1.0 + mu.abs()));
            let (z1, _, _) = normalize_input(&xs);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let (z2, _, _) = normalize_input(&ys);
            for (p, q) in z1.iter().zip(&z2) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn round_trip_within_1e12(xs in proptest::collection::vec(-10.0f64..10.0, 4..70)) {
            let (z, mu, sigma) = normalize_input(&xs);
            prop_assume!(sigma > 1e-3);
            for (back, x) in denormalize(&z, mu, sigma).iter().zip(&xs) {
                prop_assert!((back - x).abs() < 1e-12);
            }
        }
    }
}
