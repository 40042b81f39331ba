//! Experiment orchestration shared by the command-line tool and the
//! acceptance suite.

mod config;
mod data;
mod diagnose;
mod pipeline;
mod sweeps;

pub use config::{load_system, ExperimentConfig, Geometry};
pub use data::{
    generate_splits, harder_set, source_splits, split, split_counts, subsample, target_splits, LabelCounts, Manifest,
    Splits, HARDER_SEED_OFFSET,
};
pub use diagnose::{diagnose, Diagnostics, FeatureRow, LayerAlignment};
pub use pipeline::{
    evaluate, pretrained_model, random_model, rollout_all, run_schs, run_variants, schs_config, teaf_config, two_stage,
    unpatched, Evaluation, TrajectoryError, Variant, VariantScore,
};
pub use sweeps::{
    ablate, fewshot, median, pretrain_benefit, sweep_seed, Ablation, AblationRow, FewShotCurve, FewShotPoint,
    PretrainPair,
};
