//! Scheduled-sampling fine-tuning on hard cases.
//!
//! Each trajectory is replayed from its first `L_seq` samples in steps of
//! `L_pred`. Every step scores the model against the true next segment and
//! feeds either that segment or the model's own prediction into the next
//! window. Errors are normalized with the statistics of the ground-truth
//! window at the same position. Fed-back predictions are constants: gradients flow through each
//! step's forward only and are accumulated over the trajectory before a
//! single optimizer step.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit::zero_trainable;
use super::log::{EpochRecord, TrainLog};
use super::loss::fit_batch;
use super::optim::{adam_step, clip_global_norm, cosine_lr, AdamState, EarlyStopping, StopDecision, CLIP_NORM};
use super::schedule::{build_next_input, mix_segment, sampling_rate};
use super::teaf::rollout_mse;
use crate::datapipe::window_stats;
use crate::error::{Error, Result};
use crate::model::{FreezeMask, Model, ModelConfig, ModelParameters};
use crate::numerics::Scalar;
use crate::simulator::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchSConfig {
    pub e_max: usize,
    pub e_start: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for SchSConfig {
    fn default() -> Self {
        Self { e_max: 6, e_start: 1, lr: 1e-4, seed: 0 }
    }
}

impl SchSConfig {
    pub fn validate(&self) -> Result<()> {
        if self.e_start >= self.e_max {
            return Err(Error::Config(format!("E_start = {} must be below E_max = {}", self.e_start, self.e_max)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("SchS learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one scheduled-sampling replay of a trajectory visited.
#[derive(Debug, Clone, PartialEq)]
pub struct SchsTrace<T> {
    /// Model inputs per step, `n_x` physical windows each.
    pub inputs: Vec<Vec<Vec<T>>>,
    /// Per channel, the concatenated predictions of every step.
    pub predictions: Vec<Vec<T>>,
    /// Per step and channel, whether the truth was fed back.
    pub from_truth: Vec<Vec<bool>>,
    /// Mean squared error over steps, channels and samples, normalized with
    /// the ground-truth window statistics.
    pub loss: f64,
}

/// Number of full replay steps over a trajectory of `len` samples.
pub fn schs_steps(len: usize, l_seq: usize, l_pred: usize) -> usize {
    len.saturating_sub(l_seq) / l_pred
}

fn replay<T: Scalar, R: Rng>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    traj: &Trajectory,
    epsilon: f64,
    rng: &mut R,
    mut grads: Option<(&mut ModelParameters<T>, &FreezeMask)>,
    record: bool,
) -> Result<SchsTrace<T>> {
    let (l_seq, l_pred) = (cfg.l_seq, cfg.l_pred);
    let steps = schs_steps(traj.len(), l_seq, l_pred);
    if steps == 0 {
        return Err(Error::Shape(format!(
            "trajectory of {} samples is shorter than L_seq + L_pred = {}",
            traj.len(),
            l_seq + l_pred
        )));
    }
    let conv = |xs: &[f64]| xs.iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
    let n_x = traj.n_x();
    let scale = 1.0 / (steps * n_x * l_pred) as f64;
    let mut inputs: Vec<Vec<T>> = traj.channels.iter().map(|c| conv(&c[..l_seq])).collect();
    let mut trace = SchsTrace {
        inputs: Vec::new(),
        predictions: vec![Vec::with_capacity(steps * l_pred); n_x],
        from_truth: Vec::new(),
        loss: 0.0,
    };
    let mut sq = 0.0;
    for j in 0..steps {
        let at = l_seq + j * l_pred;
        let truth: Vec<Vec<T>> = traj.channels.iter().map(|c| conv(&c[at..at + l_pred])).collect();
        let xr: Vec<&[T]> = inputs.iter().map(Vec::as_slice).collect();
        let yr: Vec<&[T]> = truth.iter().map(Vec::as_slice).collect();
        let truth_scales: Vec<T> = traj.channels.iter().map(|c| window_stats(&conv(&c[at - l_seq..at])).1).collect();
        let fit = fit_batch(
            params,
            cfg,
            &xr,
            &yr,
            Some(&truth_scales),
            T::lit(scale),
            grads.as_mut().map(|(g, f)| (&mut **g, *f)),
        )?;
        sq += fit.sq_sum;
        if record {
            trace.inputs.push(inputs.clone());
        }
        let mut flags = Vec::with_capacity(n_x);
        for (c, pred) in fit.preds.into_iter().enumerate() {
            let (seg, flag) = mix_segment(&truth[c], &pred, epsilon, rng);
            inputs[c] = build_next_input(&inputs[c], &seg)?;
            trace.predictions[c].extend(pred);
            flags.push(flag);
        }
        if record {
            trace.from_truth.push(flags);
        }
    }
    trace.loss = sq * scale;
    Ok(trace)
}

/// Replays `traj` at a fixed truth probability without touching any
/// gradient. At `epsilon = 0` this is a free-running rollout over the full
/// steps; at `epsilon = 1` every input is a ground-truth window.
pub fn schs_trace<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    traj: &Trajectory,
    epsilon: f64,
    seed: u64,
) -> Result<SchsTrace<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    replay(params, cfg, traj, epsilon, &mut rng, None, true)
}

#[cfg(test)]
pub(crate) fn replay_for_test<T: Scalar, R: Rng>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    traj: &Trajectory,
    rng: &mut R,
    grads: &mut ModelParameters<T>,
    freeze: &FreezeMask,
) -> Result<f64> {
    replay(params, cfg, traj, 1.0, rng, Some((grads, freeze)), false).map(|r| r.loss)
}

/// Mean free-running replay loss over `trajectories`.
pub fn rollout_loss<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    trajectories: &[Trajectory],
) -> Result<f64> {
    use rayon::prelude::*;
    let losses: Vec<f64> = crate::parallel::install(|| {
        trajectories
            .par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                replay(params, cfg, t, 0.0, &mut rng, None, false).map(|r| r.loss)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchSOutcome {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub initial_val: Option<f64>,
    pub best_val: Option<f64>,
    pub best_epoch: usize,
}

/// Mean physical-unit rollout MSE over `trajectories`.
pub fn val_rollout_mse<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    trajectories: &[Trajectory],
) -> Result<f64> {
    use rayon::prelude::*;
    let mse: Vec<f64> = crate::parallel::install(|| {
        trajectories.par_iter().map(|t| rollout_mse(params, cfg, t)).collect::<Result<Vec<_>>>()
    })?;
    Ok(mse.iter().sum::<f64>() / mse.len().max(1) as f64)
}

/// Scheduled-sampling fine-tuning on `hard`. When `val` is nonempty its
/// physical-unit rollout MSE drives early stopping and the best parameters
/// are restored.
pub fn schs_train<T: Scalar>(
    model: &mut Model<T>,
    hard: &[Trajectory],
    val: &[Trajectory],
    cfg: &SchSConfig,
    log: &mut TrainLog,
) -> Result<SchSOutcome> {
    cfg.validate()?;
    if hard.is_empty() {
        return Err(Error::Config("SchS needs at least one hard case".into()));
    }
    let mcfg = model.config.clone();
    let initial_val = if val.is_empty() { None } else { Some(val_rollout_mse(&model.params, &mcfg, val)?) };
    let mut stopper = initial_val.map(|v| EarlyStopping::new(v, &model.params));
    let mut adam = AdamState::new(&model.params, &model.freeze);
    let mut grads = ModelParameters::zeros(&mcfg);
    let mut epoch_losses = Vec::with_capacity(cfg.e_max);
    for epoch in 1..=cfg.e_max {
        let t0 = Instant::now();
        let epsilon = sampling_rate(epoch, cfg.e_start, cfg.e_max)?;
        let lr = cosine_lr(cfg.lr, epoch - 1, cfg.e_max);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..hard.len()).collect();
        order.shuffle(&mut rng);
        let (mut total, mut clipped) = (0.0, 0usize);
        for &i in &order {
            zero_trainable(&mut grads, &model.freeze);
            let r =
                replay(&model.params, &mcfg, &hard[i], epsilon, &mut rng, Some((&mut grads, &model.freeze)), false)?;
            if !r.loss.is_finite() {
                return Err(Error::Divergence { stage: "schs".into(), epoch, step: i, loss: r.loss });
            }
            if clip_global_norm(&mut grads, &model.freeze, CLIP_NORM) > CLIP_NORM {
                clipped += 1;
            }
            adam_step(&mut model.params, &grads, &mut adam, lr);
            total += r.loss;
        }
        let train_loss = total / hard.len() as f64;
        epoch_losses.push(train_loss);
        let val_loss = if val.is_empty() { None } else { Some(val_rollout_mse(&model.params, &mcfg, val)?) };
        log.push(EpochRecord {
            stage: "schs".into(),
            epoch,
            epsilon: Some(epsilon),
            train_loss,
            val_loss,
            lr,
            wall_seconds: t0.elapsed().as_secs_f64(),
            clipped_steps: clipped,
        })?;
        if let (Some(es), Some(v)) = (stopper.as_mut(), val_loss) {
            if es.observe(epoch, v, &model.params) == StopDecision::Stop {
                break;
            }
        }
    }
    let (best_val, best_epoch) = match stopper {
        Some(es) => {
            let r = (Some(es.best_loss), es.best_epoch);
            model.params = es.into_best();
            r
        }
        None => (None, epoch_losses.len()),
    };
    Ok(SchSOutcome { epoch_losses, initial_val, best_val, best_epoch })
}
