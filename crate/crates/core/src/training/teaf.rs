//! Teacher-forcing fine-tuning followed by hard-case mining.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_teacher_forced, FitOptions, FitSummary, SeriesWindows};
use super::log::TrainLog;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParameters};
use crate::numerics::Scalar;
use crate::rollout::{rollout_holding, ObservationWindow};
use crate::simulator::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeaFConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Number of hard cases `K` handed to scheduled sampling.
    pub hard_cases: usize,
    pub samples_per_epoch: Option<usize>,
    pub val_samples: Option<usize>,
    pub seed: u64,
}

impl Default for TeaFConfig {
    fn default() -> Self {
        Self {
            epochs: 6,
            lr: 1e-3,
            batch_size: 32,
            hard_cases: 32,
            samples_per_epoch: Some(2048),
            val_samples: Some(512),
            seed: 0,
        }
    }
}

impl TeaFConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hard_cases == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("TeaF epochs, learning rate, batch size and K must be positive".into()));
        }
        if self.samples_per_epoch == Some(0) || self.val_samples == Some(0) {
            return Err(Error::Config("TeaF sample caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCase {
    pub trajectory: usize,
    pub mse: f64,
}

/// Trajectories with the largest rollout error, sorted descending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HardCaseSet {
    pub cases: Vec<HardCase>,
}

impl HardCaseSet {
    pub fn ids(&self) -> Vec<usize> {
        self.cases.iter().map(|c| c.trajectory).collect()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    /// The selected trajectories, in set order.
    pub fn select(&self, trajectories: &[Trajectory]) -> Vec<Trajectory> {
        self.cases.iter().map(|c| trajectories[c.trajectory].clone()).collect()
    }
}

/// Physical-unit mean squared error of a full rollout of `traj`.
pub fn rollout_mse<T: Scalar>(params: &ModelParameters<T>, cfg: &ModelConfig, traj: &Trajectory) -> Result<f64> {
    let window = ObservationWindow::<T>::from_trajectory(traj, cfg.l_seq)?;
    let r = rollout_holding(params, cfg, &window, traj.len())?;
    let mut sq = 0.0;
    let mut n = 0usize;
    for (pred, truth) in r.predictions.iter().zip(&traj.channels) {
        for (&p, &t) in pred.iter().zip(&truth[cfg.l_seq..]) {
            sq += (p.as_f64() - t).powi(2);
            n += 1;
        }
    }
    Ok(sq / n as f64)
}

/// Rolls out every trajectory and keeps the `k` worst. Non-finite errors rank
/// first; ties go to the lower index.
pub fn mine_hard_cases<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    trajectories: &[Trajectory],
    k: usize,
) -> Result<HardCaseSet> {
    let scores: Vec<f64> = crate::parallel::install(|| {
        trajectories.par_iter().map(|t| rollout_mse(params, cfg, t)).collect::<Result<Vec<_>>>()
    })?;
    let mut cases: Vec<HardCase> = scores
        .into_iter()
        .enumerate()
        .map(|(trajectory, mse)| HardCase { trajectory, mse: if mse.is_nan() { f64::INFINITY } else { mse } })
        .collect();
    cases.sort_by(|a, b| b.mse.total_cmp(&a.mse).then(a.trajectory.cmp(&b.trajectory)));
    cases.truncate(k);
    Ok(HardCaseSet { cases })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeaFOutcome {
    pub hard_cases: HardCaseSet,
    pub summary: FitSummary,
}

/// Teacher forcing on every channel window of `train`, early stopping on
/// `val`, then hard-case mining over `train` with the trained model.
pub fn teaf_train<T: Scalar>(
    model: &mut Model<T>,
    train: &[Trajectory],
    val: &[Trajectory],
    cfg: &TeaFConfig,
    log: &mut TrainLog,
) -> Result<TeaFOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("TeaF needs nonempty training and validation sets".into()));
    }
    let (l_seq, l_pred) = (model.config.l_seq, model.config.l_pred);
    let opts = FitOptions {
        stage: "teaf".into(),
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        samples_per_epoch: cfg.samples_per_epoch,
        val_samples: cfg.val_samples,
        seed: cfg.seed,
    };
    let summary = fit_teacher_forced(
        model,
        &SeriesWindows::from_trajectories(train, l_seq, l_pred),
        &SeriesWindows::from_trajectories(val, l_seq, l_pred),
        &opts,
        log,
    )?;
    let hard_cases = mine_hard_cases(&model.params, &model.config, train, cfg.hard_cases)?;
    Ok(TeaFOutcome { hard_cases, summary })
}
