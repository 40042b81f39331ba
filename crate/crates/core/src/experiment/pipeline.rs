//! The stages of one experiment run: pre-training, the two fine-tuning
//! stages, evaluation and the ablation variants built from them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::Splits;
use crate::error::Result;
use crate::evaluation::{compute_metrics, fingerprint, trajectory_errors, MetricsReport};
use crate::model::{Model, ModelConfig, ModelParameters};
use crate::rollout::{rollout_holding, ObservationWindow, RolloutResult};
use crate::simulator::Trajectory;
use crate::training::{
    mine_hard_cases, schs_train, surrogate_pretrain, teaf_train, HardCaseSet, SchSConfig, TeaFConfig, TeaFOutcome,
    TrainLog,
};

/// Surrogate-pretrained model with blocks frozen.
pub fn pretrained_model(
    cfg: &ModelConfig,
    exp: &ExperimentConfig,
    seed: u64,
    log: &mut TrainLog,
) -> Result<Model<f64>> {
    surrogate_pretrain(cfg, &exp.surrogate, seed, log).map(|(m, _)| m)
}

/// Randomly initialized model with blocks frozen.
pub fn random_model(cfg: &ModelConfig, seed: u64) -> Result<Model<f64>> {
    let mut m = Model::init(cfg.clone(), seed)?;
    m.freeze_blocks();
    Ok(m)
}

pub fn teaf_config(exp: &ExperimentConfig, seed: u64) -> TeaFConfig {
    TeaFConfig { seed, ..exp.teaf.clone() }
}

pub fn schs_config(exp: &ExperimentConfig, seed: u64) -> SchSConfig {
    SchSConfig { seed, ..exp.schs.clone() }
}

/// Scheduled sampling on the hard cases of `train`, early-stopped on `val`.
pub fn run_schs(
    model: &mut Model<f64>,
    train: &[Trajectory],
    hard: &HardCaseSet,
    val: &[Trajectory],
    cfg: &SchSConfig,
    log: &mut TrainLog,
) -> Result<()> {
    schs_train(model, &hard.select(train), val, cfg, log).map(|_| ())
}

/// Rolls out every trajectory from its first `L_seq` samples.
pub fn rollout_all(
    params: &ModelParameters<f64>,
    cfg: &ModelConfig,
    trajectories: &[Trajectory],
) -> Result<Vec<RolloutResult<f64>>> {
    crate::parallel::install(|| {
        trajectories
            .par_iter()
            .map(|t| {
                let w = ObservationWindow::from_trajectory(t, cfg.l_seq)?;
                rollout_holding(params, cfg, &w, t.len())
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub trajectory: usize,
    pub unstable: bool,
    pub mae: f64,
    pub mse: f64,
    pub divergent_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub per_trajectory: Vec<TrajectoryError>,
    pub rollouts: Vec<RolloutResult<f64>>,
}

pub fn evaluate(model: &Model<f64>, trajectories: &[Trajectory]) -> Result<Evaluation> {
    let cfg = &model.config;
    let rollouts = rollout_all(&model.params, cfg, trajectories)?;
    let report = compute_metrics(&rollouts, trajectories, cfg.l_seq, &fingerprint(cfg)?)?;
    let per_trajectory = rollouts
        .iter()
        .zip(trajectories)
        .enumerate()
        .map(|(k, (r, t))| {
            let (abs, sq, n) = trajectory_errors(r, t, cfg.l_seq)?;
            Ok(TrajectoryError {
                trajectory: k,
                unstable: t.is_unstable(),
                mae: abs / n as f64,
                mse: sq / n as f64,
                divergent_channels: r.divergent_at.iter().flatten().count(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation { report, per_trajectory, rollouts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WithoutTeaf,
    WithoutSchs,
    WithoutPatch,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Self::Full, Self::WithoutTeaf, Self::WithoutSchs, Self::WithoutPatch];

    pub fn label(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::WithoutTeaf => "w/o TeaF",
            Self::WithoutSchs => "w/o SchS",
            Self::WithoutPatch => "w/o patch",
        }
    }
}

/// Copy of `model` re-tokenized with unit patches (`P = L_seq`). Block
/// weights and layer norms carry over; the embedding, positions and head
/// are re-initialized from `seed` because their shapes depend on `P`.
pub fn unpatched(model: &Model<f64>, seed: u64) -> Result<Model<f64>> {
    let cfg = ModelConfig { patch_len: 1, stride: 1, ..model.config.clone() };
    let mut out = random_model(&cfg, seed)?;
    for (dst, src) in out.params.arrays.iter_mut().zip(&model.params.arrays) {
        if dst.name.starts_with("blocks.") {
            dst.value.clone_from(&src.value);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub variant: Variant,
    pub seed: u64,
    pub mae_h: f64,
    pub mse_h: f64,
}

fn score(variant: Variant, seed: u64, model: &Model<f64>, test: &[Trajectory]) -> Result<VariantScore> {
    let eval = evaluate(model, test)?;
    let h = eval.report.get(crate::evaluation::StabilityCategory::H).expect("nonempty test set");
    Ok(VariantScore { variant, seed, mae_h: h.mae, mse_h: h.mse })
}

/// TeaF, hard-case mining and SchS in sequence, returning the TeaF-only
/// snapshot alongside the final model.
pub fn two_stage(
    model: Model<f64>,
    splits: &Splits,
    exp: &ExperimentConfig,
    seed: u64,
    log: &mut TrainLog,
) -> Result<(Model<f64>, TeaFOutcome, Model<f64>)> {
    let mut m = model;
    let teaf = teaf_train(&mut m, &splits.train, &splits.val, &teaf_config(exp, seed), log)?;
    let after_teaf = m.clone();
    run_schs(&mut m, &splits.train, &teaf.hard_cases, &splits.val, &schs_config(exp, seed), log)?;
    Ok((after_teaf, teaf, m))
}

/// Scores of all four variants for one seed, starting from `pretrained`.
pub fn run_variants(
    pretrained: &Model<f64>,
    splits: &Splits,
    exp: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<VariantScore>> {
    let mut log = TrainLog::in_memory();
    let (teaf_only, _, full) = two_stage(pretrained.clone(), splits, exp, seed, &mut log)?;

    let mut no_teaf = pretrained.clone();
    let hard = mine_hard_cases(&no_teaf.params, &no_teaf.config, &splits.train, exp.teaf.hard_cases)?;
    run_schs(&mut no_teaf, &splits.train, &hard, &splits.val, &schs_config(exp, seed), &mut log)?;

    let (_, _, no_patch) = two_stage(unpatched(pretrained, seed)?, splits, exp, seed, &mut log)?;

    Ok(vec![
        score(Variant::Full, seed, &full, &splits.test)?,
        score(Variant::WithoutTeaf, seed, &no_teaf, &splits.test)?,
        score(Variant::WithoutSchs, seed, &teaf_only, &splits.test)?,
        score(Variant::WithoutPatch, seed, &no_patch, &splits.test)?,
    ])
}
