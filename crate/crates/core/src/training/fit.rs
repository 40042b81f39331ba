//! Teacher-forced minibatch loop shared by TeaF fine-tuning and surrogate
//! pre-training.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EpochRecord, TrainLog};
use super::loss::fit_batch;
use super::optim::{adam_step, clip_global_norm, cosine_lr, AdamState, EarlyStopping, StopDecision, CLIP_NORM};
use crate::error::{Error, Result};
use crate::model::{FreezeMask, Model, ModelConfig, ModelParameters};
use crate::numerics::Scalar;
use crate::simulator::Trajectory;

/// Every `(series, start)` window position over a set of univariate series.
#[derive(Debug, Clone)]
pub struct SeriesWindows<'a> {
    pub series: Vec<&'a [f64]>,
    pub origins: Vec<(usize, usize)>,
}

impl<'a> SeriesWindows<'a> {
    pub fn new(series: Vec<&'a [f64]>, l_seq: usize, l_pred: usize) -> Self {
        let mut origins = Vec::new();
        for (k, s) in series.iter().enumerate() {
            let n = crate::datapipe::window_count(s.len(), l_seq, l_pred);
            origins.extend((0..n).map(|start| (k, start)));
        }
        Self { series, origins }
    }

    /// Channels in trajectory-major order.
    pub fn from_trajectories(trajectories: &'a [Trajectory], l_seq: usize, l_pred: usize) -> Self {
        let series = trajectories.iter().flat_map(|t| t.channels.iter().map(Vec::as_slice)).collect();
        Self::new(series, l_seq, l_pred)
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    fn batch<T: Scalar>(&self, picks: &[usize], l_seq: usize, l_pred: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let conv = |xs: &[f64]| xs.iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
        picks
            .iter()
            .map(|&i| {
                let (k, s) = self.origins[i];
                let x = self.series[k];
                (conv(&x[s..s + l_seq]), conv(&x[s + l_seq..s + l_seq + l_pred]))
            })
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub stage: String,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Windows drawn per epoch without replacement; all when `None`.
    pub samples_per_epoch: Option<usize>,
    /// Size of the fixed validation subset; all when `None`.
    pub val_samples: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub initial_val: Option<f64>,
    pub best_val: Option<f64>,
    /// 0 when no epoch beat the starting parameters.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

fn subset(n: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match cap {
        Some(c) if c < n => rand::seq::index::sample(rng, n, c).into_vec(),
        _ => (0..n).collect(),
    }
}

pub(crate) fn zero_trainable<T: Scalar>(grads: &mut ModelParameters<T>, freeze: &FreezeMask) {
    for (a, &t) in grads.arrays.iter_mut().zip(&freeze.trainable) {
        if t {
            a.value.data_mut().fill(T::zero());
        }
    }
}

/// Mean normalized-space squared error over the chosen windows.
pub fn window_loss<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    set: &SeriesWindows,
    picks: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in picks.chunks(256) {
        let (x, y) = set.batch::<T>(chunk, cfg.l_seq, cfg.l_pred);
        let xr: Vec<&[T]> = x.iter().map(Vec::as_slice).collect();
        let yr: Vec<&[T]> = y.iter().map(Vec::as_slice).collect();
        total += fit_batch(params, cfg, &xr, &yr, None, T::one(), None)?.sq_sum;
    }
    Ok(total / (picks.len() * cfg.l_pred).max(1) as f64)
}

/// Teacher-forced training with seeded sampling, cosine learning rate,
/// global-norm clipping and patience-based early stopping on `val` (skipped
/// when `val` is empty). The best parameters seen are restored at the end.
pub fn fit_teacher_forced<T: Scalar>(
    model: &mut Model<T>,
    train: &SeriesWindows,
    val: &SeriesWindows,
    opts: &FitOptions,
    log: &mut TrainLog,
) -> Result<FitSummary> {
    if train.is_empty() {
        return Err(Error::Config(format!("{}: no training windows", opts.stage)));
    }
    if opts.epochs == 0 || opts.batch_size == 0 || !(opts.lr > 0.0) {
        return Err(Error::Config(format!("{}: epochs, batch size and learning rate must be positive", opts.stage)));
    }
    let cfg = model.config.clone();
    let mut val_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    val_rng.set_stream(u64::MAX);
    let val_picks = subset(val.len(), opts.val_samples, &mut val_rng);
    let initial_val = if val.is_empty() { None } else { Some(window_loss(&model.params, &cfg, val, &val_picks)?) };
    let mut stopper = initial_val.map(|v| EarlyStopping::new(v, &model.params));
    let mut adam = AdamState::new(&model.params, &model.freeze);
    let mut grads = ModelParameters::zeros(&cfg);
    let mut epochs_run = 0;
    for epoch in 1..=opts.epochs {
        let t0 = Instant::now();
        let lr = cosine_lr(opts.lr, epoch - 1, opts.epochs);
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(epoch as u64);
        let order = subset(train.len(), opts.samples_per_epoch, &mut rng);
        let (mut sq, mut count, mut clipped) = (0.0, 0usize, 0usize);
        for (step, chunk) in order.chunks(opts.batch_size).enumerate() {
            let (x, y) = train.batch::<T>(chunk, cfg.l_seq, cfg.l_pred);
            let xr: Vec<&[T]> = x.iter().map(Vec::as_slice).collect();
            let yr: Vec<&[T]> = y.iter().map(Vec::as_slice).collect();
            let n = chunk.len() * cfg.l_pred;
            zero_trainable(&mut grads, &model.freeze);
            let fit = fit_batch(
                &model.params,
                &cfg,
                &xr,
                &yr,
                None,
                T::lit(1.0 / n as f64),
                Some((&mut grads, &model.freeze)),
            )?;
            let loss = fit.sq_sum / n as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence { stage: opts.stage.clone(), epoch, step, loss });
            }
            if clip_global_norm(&mut grads, &model.freeze, CLIP_NORM) > CLIP_NORM {
                clipped += 1;
            }
            adam_step(&mut model.params, &grads, &mut adam, lr);
            sq += fit.sq_sum;
            count += n;
        }
        let val_loss = if val.is_empty() { None } else { Some(window_loss(&model.params, &cfg, val, &val_picks)?) };
        epochs_run = epoch;
        log.push(EpochRecord {
            stage: opts.stage.clone(),
            epoch,
            epsilon: None,
            train_loss: sq / count as f64,
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
        None => (None, epochs_run),
    };
    Ok(FitSummary { initial_val, best_val, best_epoch, epochs_run })
}
