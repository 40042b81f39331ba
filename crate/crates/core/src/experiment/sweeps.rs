//! Multi-seed sweeps: the ablation grid, the pre-training comparison and
//! the few-shot scalability curve.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{subsample, Splits};
use super::diagnose::diagnose;
use super::pipeline::{evaluate, pretrained_model, random_model, run_variants, two_stage, Variant, VariantScore};
use crate::error::Result;
use crate::evaluation::{StabilityCategory, CO_DIRECTION_THRESHOLD};
use crate::model::Model;
use crate::training::{teaf_train, TrainLog};

/// Median of a nonempty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seed `k` of a sweep.
pub fn sweep_seed(exp: &ExperimentConfig, k: usize) -> u64 {
    exp.seed + k as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub median_mae_h: f64,
    pub median_mse_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub rows: Vec<AblationRow>,
    pub scores: Vec<VariantScore>,
}

impl Ablation {
    pub const CSV_HEADER: &'static str = "variant,median_mae_h,median_mse_h";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows.iter().map(|r| format!("{},{:e},{:e}", r.variant.label(), r.median_mae_h, r.median_mse_h)).collect()
    }

    pub fn row(&self, v: Variant) -> &AblationRow {
        self.rows.iter().find(|r| r.variant == v).expect("all variants present")
    }
}

/// Every variant on every seed. Each seed pre-trains its own backbone.
pub fn ablate(exp: &ExperimentConfig, splits: &Splits) -> Result<Ablation> {
    let cfg = exp.model_config()?;
    let mut scores = Vec::new();
    for k in 0..exp.seeds {
        let seed = sweep_seed(exp, k);
        let pre = pretrained_model(&cfg, exp, seed, &mut TrainLog::in_memory())?;
        let s = run_variants(&pre, splits, exp, seed)?;
        log::info!("ablation seed {seed}: {s:?}");
        scores.extend(s);
    }
    let rows = Variant::ALL
        .iter()
        .map(|&v| {
            let (mae, mse): (Vec<f64>, Vec<f64>) =
                scores.iter().filter(|s| s.variant == v).map(|s| (s.mae_h, s.mse_h)).unzip();
            AblationRow { variant: v, median_mae_h: median(&mae), median_mse_h: median(&mse) }
        })
        .collect();
    Ok(Ablation { rows, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainPair {
    pub seed: u64,
    /// Best TeaF validation loss with frozen pretrained / random blocks.
    pub pretrained_val: f64,
    pub random_val: f64,
    pub pretrained_stability: f64,
    pub random_stability: f64,
}

/// TeaF with frozen surrogate-pretrained blocks against TeaF with frozen
/// random blocks, one pair per seed.
pub fn pretrain_benefit(exp: &ExperimentConfig, splits: &Splits) -> Result<Vec<PretrainPair>> {
    let cfg = exp.model_config()?;
    (0..exp.seeds)
        .map(|k| {
            let seed = sweep_seed(exp, k);
            let mut log = TrainLog::in_memory();
            let teaf = super::pipeline::teaf_config(exp, seed);
            let mut pre = pretrained_model(&cfg, exp, seed, &mut log)?;
            let pv = teaf_train(&mut pre, &splits.train, &splits.val, &teaf, &mut log)?.summary;
            let mut rnd = random_model(&cfg, seed)?;
            let rv = teaf_train(&mut rnd, &splits.train, &splits.val, &teaf, &mut log)?.summary;
            Ok(PretrainPair {
                seed,
                pretrained_val: pv.best_val.expect("validation set present"),
                random_val: rv.best_val.expect("validation set present"),
                pretrained_stability: diagnose(&pre, &splits.val, CO_DIRECTION_THRESHOLD)?.feature_stability,
                random_stability: diagnose(&rnd, &splits.val, CO_DIRECTION_THRESHOLD)?.feature_stability,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotPoint {
    pub fraction: f64,
    pub seed: u64,
    pub trajectories: usize,
    pub mae_h: f64,
    pub mse_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotCurve {
    pub points: Vec<FewShotPoint>,
    /// `(fraction, median MAE_H, median MSE_H)`, fractions ascending.
    pub medians: Vec<(f64, f64, f64)>,
}

impl FewShotCurve {
    pub const CSV_HEADER: &'static str = "fraction,median_mae_h,median_mse_h";

    pub fn csv_rows(&self) -> Vec<String> {
        self.medians.iter().map(|(f, a, s)| format!("{f},{a:e},{s:e}")).collect()
    }
}

/// Fine-tunes `source` (TeaF then SchS) on a `f`-subsample of the target
/// training split for each fraction and seed; `f = 0` evaluates zero-shot.
pub fn fewshot(source: &Model<f64>, target: &Splits, exp: &ExperimentConfig) -> Result<FewShotCurve> {
    let mut fractions = exp.fractions.clone();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let mut points = Vec::new();
    for &fraction in &fractions {
        for k in 0..exp.seeds {
            let seed = sweep_seed(exp, k);
            let subset = subsample(&target.train, fraction, seed);
            let model = if subset.is_empty() {
                source.clone()
            } else {
                let splits = Splits { train: subset.clone(), val: target.val.clone(), test: Vec::new() };
                two_stage(source.clone(), &splits, exp, seed, &mut TrainLog::in_memory())?.2
            };
            let eval = evaluate(&model, &target.test)?;
            let h = eval.report.get(StabilityCategory::H).expect("nonempty target test set");
            points.push(FewShotPoint { fraction, seed, trajectories: subset.len(), mae_h: h.mae, mse_h: h.mse });
        }
    }
    let medians = fractions
        .iter()
        .map(|&f| {
            let (a, s): (Vec<f64>, Vec<f64>) =
                points.iter().filter(|p| p.fraction == f).map(|p| (p.mae_h, p.mse_h)).unzip();
            (f, median(&a), median(&s))
        })
        .collect();
    Ok(FewShotCurve { points, medians })
}
