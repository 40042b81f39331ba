//! Scheduled-sampling primitives: the linear-decay truth probability, the
//! per-segment truth/prediction draw and the sliding input update.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Probability of feeding ground truth at epoch `k` (1-based): 1 before
/// `e_start`, then a linear decay reaching 0 at `e_max`.
pub fn sampling_rate(k: usize, e_start: usize, e_max: usize) -> Result<f64> {
    if e_max <= e_start {
        return Err(Error::Config(format!("E_max = {e_max} must exceed E_start = {e_start}")));
    }
    if k == 0 || k > e_max {
        return Err(Error::Config(format!("epoch {k} outside 1..={e_max}")));
    }
    if k < e_start {
        return Ok(1.0);
    }
    Ok(1.0 - (k - e_start) as f64 / (e_max - e_start) as f64)
}

/// One Bernoulli draw for the whole segment: the truth with probability
/// `epsilon`, else the prediction. The flag is true when truth was chosen.
pub fn mix_segment<T: Scalar, R: Rng + ?Sized>(truth: &[T], pred: &[T], epsilon: f64, rng: &mut R) -> (Vec<T>, bool) {
    let from_truth = rng.random_bool(epsilon.clamp(0.0, 1.0));
    (if from_truth { truth } else { pred }.to_vec(), from_truth)
}

/// Drops the oldest `mixed.len()` samples of `prev` and appends `mixed`.
pub fn build_next_input<T: Scalar>(prev: &[T], mixed: &[T]) -> Result<Vec<T>> {
    if mixed.len() > prev.len() {
        return Err(Error::Shape(format!("segment of length {} exceeds window of length {}", mixed.len(), prev.len())));
    }
    let mut next = Vec::with_capacity(prev.len());
    next.extend_from_slice(&prev[mixed.len()..]);
    next.extend_from_slice(mixed);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(sampling_rate(1, 3, 10).unwrap(), 1.0);
        assert_eq!(sampling_rate(10, 3, 10).unwrap(), 0.0);
        assert_eq!(sampling_rate(6, 2, 10).unwrap(), 0.5);
        assert_eq!(sampling_rate(3, 3, 10).unwrap(), 1.0);
        assert!(matches!(sampling_rate(1, 4, 4), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn rate_is_non_increasing(e_start in 0usize..20, span in 1usize..20) {
            let e_max = e_start + span;
            let mut prev = 1.0;
            for k in 1..=e_max {
                let r = sampling_rate(k, e_start, e_max).unwrap();
                prop_assert!(r <= prev && (0.0..=1.0).contains(&r));
                prev = r;
            }
        }
    }

    #[test]
    fn degenerate_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, p) = ([1.0f64, 2.0], [3.0f64, 4.0]);
        for _ in 0..100 {
            assert_eq!(mix_segment(&t, &p, 1.0, &mut rng), (t.to_vec(), true));
            assert_eq!(mix_segment(&t, &p, 0.0, &mut rng), (p.to_vec(), false));
        }
    }

    #[test]
    fn half_rate_draws_concentrate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hits = (0..10_000).filter(|_| mix_segment(&[0.0f64], &[1.0], 0.5, &mut rng).1).count();
        assert!((hits as f64 / 1e4 - 0.5).abs() < 0.02, "{hits}");
    }

    #[test]
    fn full_replacement_and_tail() {
        assert_eq!(build_next_input(&[1.0f64, 2.0], &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let next = build_next_input(&[1.0f64, 2.0, 3.0, 4.0, 5.0], &[0.1, 0.2]).unwrap();
        assert_eq!(next, vec![3.0, 4.0, 5.0, 0.1, 0.2]);
        assert_eq!(&next[3..], &[0.1, 0.2]);
    }

    #[test]
    fn truth_feeding_walks_the_series() {
        let series: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let (l_seq, l_pred) = (7, 3);
        let mut input = series[..l_seq].to_vec();
        for j in 1..=(series.len() - l_seq) / l_pred {
            let seg = &series[l_seq + (j - 1) * l_pred..l_seq + j * l_pred];
            input = build_next_input(&input, seg).unwrap();
            assert_eq!(input.as_slice(), &series[j * l_pred..j * l_pred + l_seq]);
        }
    }
}
