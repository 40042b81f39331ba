use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityLabel {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub label: StabilityLabel,
    pub out_of_step: Vec<bool>,
}

/// A machine is out of step iff its angle ever deviates from the
/// inertia-weighted centre of inertia by strictly more than `threshold`.
pub fn classify_stability(angles: &[Vec<f64>], inertia: &[f64], threshold: f64) -> StabilityVerdict {
    assert_eq!(angles.len(), inertia.len(), "one inertia per angle channel");
    let total: f64 = inertia.iter().sum();
    let steps = angles.first().map_or(0, Vec::len);
    let mut out_of_step = vec![false; angles.len()];
    for t in 0..steps {
        let coi = angles.iter().zip(inertia).map(|(a, h)| h * a[t]).sum::<f64>() / total;
        for (flag, a) in out_of_step.iter_mut().zip(angles) {
            if (a[t] - coi).abs() > threshold {
                *flag = true;
            }
        }
    }
    let label = if out_of_step.iter().any(|&f| f) { StabilityLabel::Unstable } else { StabilityLabel::Stable };
    StabilityVerdict { label, out_of_step }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_angles_are_stable() {
        let v = classify_stability(&[vec![0.1; 50], vec![-0.4; 50]], &[3.0, 5.0], PI);
        assert_eq!(v.label, StabilityLabel::Stable);
        assert_eq!(v.out_of_step, vec![false, false]);
    }

    #[test]
    fn ramping_machine_is_flagged() {
        let ramp: Vec<f64> = (0..100).map(|t| t as f64 * 0.1).collect();
        let v = classify_stability(&[vec![0.0; 100], ramp, vec![0.0; 100]], &[10.0, 1.0, 10.0], PI);
        assert_eq!(v.label, StabilityLabel::Unstable);
        assert_eq!(v.out_of_step, vec![false, true, false]);
    }

    #[test]
    fn exactly_at_threshold_is_stable() {
        // Equal inertia: the COI sits midway, each deviation is exactly 1.0.
        let v = classify_stability(&[vec![1.0; 3], vec![-1.0; 3]], &[1.0, 1.0], 1.0);
        assert_eq!(v.label, StabilityLabel::Stable);
    }

    proptest! {
        #[test]
        fn invariant_under_common_offset(
            a in proptest::collection::vec(-4.0f64..4.0, 20),
            b in proptest::collection::vec(-4.0f64..4.0, 20),
            shift in -50.0f64..50.0,
        ) {
            let h = [2.0, 3.0];
            let base = classify_stability(&[a.clone(), b.clone()], &h, 2.0);
            let shifted = classify_stability(
                &[a.iter().map(|x| x + shift).collect(), b.iter().map(|x| x + shift).collect()],
                &h,
                2.0,
            );
            // Offsets can move values across the threshold only through round-off.
            let coi = |t: usize| (2.0 * a[t] + 3.0 * b[t]) / 5.0;
            let max_dev = |x: &[f64]| (0..20).map(|t| (x[t] - coi(t)).abs()).fold(0.0, f64::max);
            prop_assume!((max_dev(&a) - 2.0).abs() > 1e-9 && (max_dev(&b) - 2.0).abs() > 1e-9);
            prop_assert_eq!(base.label, shifted.label);
        }
    }
}
