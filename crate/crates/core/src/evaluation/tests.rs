use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::ForwardTrace;
use crate::numerics::Matrix;
use crate::rollout::RolloutResult;
use crate::simulator::{StabilityLabel, Trajectory};

fn traj(channels: Vec<Vec<f64>>, label: StabilityLabel) -> Trajectory {
    let n_g = channels.len() / 2;
    Trajectory { dt: 0.02, channels, label, oos: vec![false; n_g], scenario: None, predicted: false }
}

fn result(predictions: Vec<Vec<f64>>) -> RolloutResult<f64> {
    let n = predictions.len();
    RolloutResult { predictions, divergent_at: vec![None; n], step_seconds: vec![] }
}

#[test]
fn perfect_prediction_scores_zero() {
    let t = traj(vec![vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0, 1.5]], StabilityLabel::Stable);
    let p = result(vec![vec![2.0, 3.0], vec![1.0, 1.5]]);
    let r = compute_metrics(&[p], &[t], 2, "x").unwrap();
    let h = r.get(StabilityCategory::H).unwrap();
    assert_eq!((h.mae, h.mse), (0.0, 0.0));
    assert!(r.get(StabilityCategory::U).is_none());
}

#[test]
fn hand_arithmetic_example() {
    // Single-channel trajectory: one series is enough for the arithmetic.
    let t = Trajectory {
        dt: 0.02,
        channels: vec![vec![0.0, 1.0, 4.0]],
        label: StabilityLabel::Unstable,
        oos: vec![],
        scenario: None,
        predicted: false,
    };
    let p = result(vec![vec![1.0, 2.0]]);
    let r = compute_metrics(&[p], &[t], 1, "x").unwrap();
    let u = r.get(StabilityCategory::U).unwrap();
    assert_eq!((u.mae, u.mse, u.trajectories), (1.0, 2.0, 1));
    assert!(r.get(StabilityCategory::S).is_none());
}

/// Triple loop over trajectories, channels and time, straight from the
/// definition.
fn oracle(preds: &[Vec<Vec<f64>>], truths: &[Trajectory], l_seq: usize, cat: StabilityCategory) -> Option<(f64, f64)> {
    let members: Vec<usize> = (0..truths.len()).filter(|&k| cat.contains(truths[k].label)).collect();
    if members.is_empty() {
        return None;
    }
    let n_x = truths[0].n_x();
    let t_pred = truths[0].len() - l_seq;
    let (mut mae, mut mse) = (0.0, 0.0);
    for &k in &members {
        for i in 0..n_x {
            for t in 0..t_pred {
                let e = preds[k][i][t] - truths[k].channels[i][l_seq + t];
                mae += e.abs();
                mse += e * e;
            }
        }
    }
    let d = (members.len() * n_x * t_pred) as f64;
    Some((mae / d, mse / d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn metrics_match_triple_loop(seed in any::<u64>(), n in 1usize..8, l_seq in 1usize..5, t_pred in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_x = 4;
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..n {
            let ch: Vec<Vec<f64>> = (0..n_x).map(|_| (0..l_seq + t_pred).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let label = if rng.random_bool(0.4) { StabilityLabel::Unstable } else { StabilityLabel::Stable };
            truths.push(traj(ch, label));
            preds.push((0..n_x).map(|_| (0..t_pred).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>()).collect::<Vec<_>>());
        }
        let results: Vec<_> = preds.iter().cloned().map(result).collect();
        let r = compute_metrics(&results, &truths, l_seq, "x").unwrap();
        for cat in StabilityCategory::ALL {
            match (oracle(&preds, &truths, l_seq, cat), r.get(cat)) {
                (None, None) => {}
                (Some((mae, mse)), Some(m)) => {
                    prop_assert!((m.mae - mae).abs() < 1e-9 && (m.mse - mse).abs() < 1e-9);
                    prop_assert!(m.mae >= 0.0 && m.mse >= 0.0);
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}

#[test]
fn shape_mismatch_is_reported() {
    let t = traj(vec![vec![0.0; 4], vec![0.0; 4]], StabilityLabel::Stable);
    assert!(compute_metrics(&[result(vec![vec![0.0; 3], vec![0.0; 2]])], &[t.clone()], 2, "x").is_err());
    assert!(compute_metrics::<f64>(&[], &[t], 2, "x").is_err());
}

#[test]
fn csv_rows_list_present_categories() {
    let t = traj(vec![vec![0.0, 1.0, 2.0], vec![0.0, 0.0, 0.0]], StabilityLabel::Stable);
    let r = compute_metrics(&[result(vec![vec![1.0, 2.0], vec![0.0, 0.0]])], &[t], 1, "abc").unwrap();
    let rows = r.csv_rows();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("abc,S,1,"));
    assert!(rows[1].starts_with("abc,H,1,"));
    let back: MetricsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}

fn trace(prev: Vec<Vec<f64>>, last: Vec<Vec<f64>>) -> ForwardTrace<f64> {
    ForwardTrace {
        hidden: vec![Matrix::from_rows(&prev).unwrap(), Matrix::from_rows(&last).unwrap()],
        attention: vec![],
    }
}

#[test]
fn stability_extremes() {
    let z = vec![vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 3.0]];
    let neg: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    assert!((feature_stability(&trace(z.clone(), z.clone())).unwrap().mean - 1.0).abs() < 1e-15);
    assert!((feature_stability(&trace(z.clone(), neg)).unwrap().mean + 1.0).abs() < 1e-15);
    let s = feature_stability(&trace(vec![vec![0.0; 3], z[1].clone()], z.clone())).unwrap();
    assert_eq!(s.skipped, 1);
}

proptest! {
    #[test]
    fn stability_matches_dot_norm_oracle(seed in any::<u64>(), p in 1usize..8, d in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = || (0..p).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>()).collect::<Vec<_>>();
        let (a, b) = (rows(), rows());
        let mut want = 0.0;
        for k in 0..p {
            let mut ab = 0.0; let mut aa = 0.0; let mut bb = 0.0;
            for i in 0..d { ab += a[k][i] * b[k][i]; aa += a[k][i] * a[k][i]; bb += b[k][i] * b[k][i]; }
            want += ab / (aa.sqrt() * bb.sqrt());
        }
        want /= p as f64;
        let got = feature_stability(&trace(a, b)).unwrap().mean;
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&got));
    }

    #[test]
    fn co_direction_is_scale_invariant(seed in any::<u64>(), p in 2usize..8, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..p).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let a = co_direction_ratio(&trace(rows.clone(), rows), 0.3).unwrap();
        let b = co_direction_ratio(&trace(scaled.clone(), scaled), 0.3).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn co_direction_examples() {
    let same = vec![vec![1.0, 2.0]; 4];
    assert_eq!(co_direction_ratio(&trace(same.clone(), same), 0.8).unwrap(), 1.0);
    let ortho = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    assert_eq!(co_direction_ratio(&trace(ortho.clone(), ortho), 0.8).unwrap(), 0.0);
    let one_pair = vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]];
    assert_eq!(co_direction_ratio(&trace(one_pair.clone(), one_pair), 0.8).unwrap(), 1.0 / 3.0);
    let single = vec![vec![1.0, 0.0]];
    assert!(co_direction_ratio(&trace(single.clone(), single), 0.8).is_err());
}

fn random_stochastic(p: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let rows: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            let r: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect();
            let s: f64 = r.iter().sum();
            r.iter().map(|v| v / s).collect()
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn identical_tokens_have_zero_alignment_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_stochastic(5, &mut rng);
    let x = Matrix::from_rows(&vec![vec![0.3, -1.2, 2.0]; 5]).unwrap();
    let t = alignment_terms(&a, &x).unwrap();
    assert!(t.self_terms.iter().all(|&v| v == 0.0));
    assert!(t.cross_terms.data().iter().all(|&v| v == 0.0));
}

#[test]
fn fixed_point_tokens_have_zero_self_terms() {
    // Uniform attention over tokens that are all equal to their mean in the
    // attended coordinates: use a permutation-free uniform A on a symmetric set.
    let a = Matrix::from_rows(&vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let t = alignment_terms(&a, &x).unwrap();
    assert!(t.self_terms.iter().all(|&v| v == 0.0));
    // Identity attention: every token is its own context.
    let id = Matrix::<f64>::identity(3);
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 4.0]]).unwrap();
    let t = alignment_terms(&id, &x).unwrap();
    assert!(t.self_terms.iter().all(|&v| v == 0.0));
}

#[test]
fn non_stochastic_attention_is_rejected() {
    let a = Matrix::from_rows(&[vec![0.5, 0.6], vec![0.5, 0.5]]).unwrap();
    let x = Matrix::<f64>::zeros(2, 2);
    assert!(matches!(alignment_terms(&a, &x), Err(crate::Error::Validation(_))));
}

#[test]
fn spectral_norm_matches_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [1, 2, 5, 9] {
        let a = random_stochastic(p, &mut rng);
        let m = nalgebra::DMatrix::from_row_slice(p, p, a.data());
        let want = m.singular_values().max();
        assert!((spectral_norm(&a) - want).abs() < 1e-6 * want, "{p}");
    }
}

#[test]
fn bound_matches_term_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let p = rng.random_range(2..9);
        let d = rng.random_range(1..6);
        let a = random_stochastic(p, &mut rng);
        let x = Matrix::from_rows(
            &(0..p).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect::<Vec<_>>(),
        )
        .unwrap();
        let t = alignment_terms(&a, &x).unwrap();
        let mut total = 0.0;
        for i in 0..p {
            let mut ctx = vec![0.0; d];
            for j in 0..p {
                for k in 0..d {
                    ctx[k] += a.get(i, j) * x.get(j, k);
                }
            }
            for j in 0..p {
                let dist: f64 = (0..d).map(|k| (x.get(j, k) - ctx[k]).powi(2)).sum();
                total += if i == j { (a.get(i, i) + 0.5) * dist } else { a.get(i, j) * dist };
            }
            total += 0.5 * (0..d).map(|k| x.get(i, k).powi(2)).sum::<f64>();
        }
        let want = t.spectral_norm * total;
        assert!(t.bound >= 0.0);
        assert!((t.bound - want).abs() < 1e-10 * want.max(1.0), "{} vs {}", t.bound, want);
        assert!(t.self_terms.iter().all(|&v| v >= 0.0) && t.cross_terms.data().iter().all(|&v| v >= 0.0));
    }
}
