//! Batched autoregressive rollout: every channel is forecast independently
//! from its own sliding window, all channels sharing one forward batch.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{predict_raw, ModelConfig, ModelParameters};
use crate::numerics::Scalar;
use crate::simulator::Trajectory;

/// Predictions with magnitude above this mark a channel divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Initial observation: `n_x` channels of `L_seq` physical samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow<T> {
    pub channels: Vec<Vec<T>>,
    /// Index of the first observed sample in the source series.
    pub start: usize,
}

impl<T: Scalar> ObservationWindow<T> {
    /// The first `l_seq` samples of every channel of `traj`.
    pub fn from_trajectory(traj: &Trajectory, l_seq: usize) -> Result<Self> {
        if traj.len() < l_seq {
            return Err(Error::Shape(format!("trajectory has {} samples, L_seq = {l_seq}", traj.len())));
        }
        Ok(Self {
            channels: traj.channels.iter().map(|c| c[..l_seq].iter().map(|&v| T::lit(v)).collect()).collect(),
            start: 0,
        })
    }

    pub fn n_x(&self) -> usize {
        self.channels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult<T> {
    /// Per channel, the `T − L_seq` forecast samples following the window.
    pub predictions: Vec<Vec<T>>,
    /// Per channel, the rollout step at which it was flagged divergent.
    /// Later samples of a flagged channel repeat its last valid value.
    pub divergent_at: Vec<Option<usize>>,
    pub step_seconds: Vec<f64>,
}

impl<T: Scalar> RolloutResult<T> {
    pub fn any_divergent(&self) -> bool {
        self.divergent_at.iter().any(Option::is_some)
    }
}

/// One batched step: a prediction of `L_pred` samples per window.
pub fn step<T: Scalar>(params: &ModelParameters<T>, cfg: &ModelConfig, windows: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let refs: Vec<&[T]> = windows.iter().map(Vec::as_slice).collect();
    predict_raw(params, cfg, &refs)
}

/// Number of rollout steps needed to cover `horizon` samples; the final
/// step may be partial.
pub fn rollout_steps(horizon: usize, l_seq: usize, l_pred: usize) -> usize {
    (horizon.saturating_sub(l_seq)).div_ceil(l_pred)
}

/// Rollout that never fails on divergence; flagged channels hold their last
/// valid value. Shared by [`iterative_predict`] and evaluation.
pub fn rollout_holding<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    window: &ObservationWindow<T>,
    horizon: usize,
) -> Result<RolloutResult<T>> {
    let (l_seq, l_pred) = (cfg.l_seq, cfg.l_pred);
    if horizon <= l_seq {
        return Err(Error::Config(format!("horizon {horizon} must exceed L_seq = {l_seq}")));
    }
    if window.channels.iter().any(|c| c.len() != l_seq) {
        return Err(Error::Shape(format!("observation channels must have L_seq = {l_seq} samples")));
    }
    let n_x = window.n_x();
    let total = horizon - l_seq;
    let mut inputs = window.channels.clone();
    let mut predictions: Vec<Vec<T>> = vec![Vec::with_capacity(total); n_x];
    let mut divergent_at = vec![None; n_x];
    let mut step_seconds = Vec::new();
    let limit = T::lit(DIVERGENCE_LIMIT);
    for j in 0..rollout_steps(horizon, l_seq, l_pred) {
        let t0 = Instant::now();
        let active: Vec<usize> = (0..n_x).filter(|&c| divergent_at[c].is_none()).collect();
        let batch: Vec<Vec<T>> = active.iter().map(|&c| inputs[c].clone()).collect();
        let preds = step(params, cfg, &batch)?;
        let keep = l_pred.min(total - j * l_pred);
        for (&c, pred) in active.iter().zip(preds) {
            if pred.iter().any(|&v| !v.is_finite() || v.abs() > limit) {
                divergent_at[c] = Some(j);
                continue;
            }
            inputs[c].drain(..l_pred);
            inputs[c].extend_from_slice(&pred);
            predictions[c].extend_from_slice(&pred[..keep]);
        }
        for c in 0..n_x {
            if divergent_at[c].is_some() {
                let hold = predictions[c].last().copied().unwrap_or(*window.channels[c].last().unwrap());
                predictions[c].resize(((j * l_pred) + keep).min(total), hold);
            }
        }
        step_seconds.push(t0.elapsed().as_secs_f64());
        if divergent_at.iter().all(Option::is_some) {
            for c in 0..n_x {
                let hold = predictions[c].last().copied().unwrap_or(*window.channels[c].last().unwrap());
                predictions[c].resize(total, hold);
            }
            break;
        }
    }
    Ok(RolloutResult { predictions, divergent_at, step_seconds })
}

/// Forecasts every channel to `horizon` total samples. Fails only when all
/// channels diverge, reporting the last step at which any was still valid.
pub fn iterative_predict<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    window: &ObservationWindow<T>,
    horizon: usize,
) -> Result<RolloutResult<T>> {
    let r = rollout_holding(params, cfg, window, horizon)?;
    if !r.divergent_at.is_empty() && r.divergent_at.iter().all(Option::is_some) {
        let last = r.divergent_at.iter().flatten().max().copied().unwrap();
        return Err(Error::RolloutDiverged { last_valid_step: last.checked_sub(1) });
    }
    Ok(r)
}

/// Rollout from the first `L_seq` samples of `traj` over its full length.
pub fn rollout_trajectory(
    params: &ModelParameters<f64>,
    cfg: &ModelConfig,
    traj: &Trajectory,
) -> Result<RolloutResult<f64>> {
    let window = ObservationWindow::from_trajectory(traj, cfg.l_seq)?;
    rollout_holding(params, cfg, &window, traj.len())
}

/// Observation plus forecast as a trajectory flagged as predicted. Label
/// and out-of-step flags are copied from `source`.
pub fn to_trajectory(result: &RolloutResult<f64>, window: &ObservationWindow<f64>, source: &Trajectory) -> Trajectory {
    Trajectory {
        dt: source.dt,
        channels: window
            .channels
            .iter()
            .zip(&result.predictions)
            .map(|(obs, pred)| obs.iter().chain(pred).copied().collect())
            .collect(),
        label: source.label,
        oos: source.oos.clone(),
        scenario: source.scenario.clone(),
        predicted: true,
    }
}

/// Replaces the label and out-of-step flags with those of the trajectory's
/// own angle channels.
pub fn relabel(traj: &mut Trajectory, inertia: &[f64], threshold: f64) {
    let n_g = traj.n_g();
    let verdict = crate::simulator::classify_stability(&traj.channels[..n_g], inertia, threshold);
    traj.label = verdict.label;
    traj.oos = verdict.out_of_step;
}
