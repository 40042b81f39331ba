//! Representation diagnostics over the observation windows of a dataset.

use serde::{Deserialize, Serialize};

use crate::datapipe::normalize_input;
use crate::error::Result;
use crate::evaluation::{alignment_terms, co_direction_ratio, feature_stability};
use crate::model::{forward_trace, Model};
use crate::numerics::Matrix;
use crate::simulator::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAlignment {
    pub layer: usize,
    /// Means over traces and heads.
    pub self_sum: f64,
    pub cross_sum: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub trajectory: usize,
    pub channel: usize,
    pub patch: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub traces: usize,
    /// Mean over traces of the per-trace cross-layer similarity.
    pub feature_stability: f64,
    pub skipped_positions: usize,
    /// Mean over traces of the per-trace co-direction ratio.
    pub co_direction: f64,
    pub threshold: f64,
    pub per_trace_stability: Vec<f64>,
    pub alignment: Vec<LayerAlignment>,
    #[serde(skip)]
    pub features: Vec<FeatureRow>,
}

/// One trace per channel of each trajectory, fed the first `L_seq` samples.
pub fn diagnose(model: &Model<f64>, trajectories: &[Trajectory], threshold: f64) -> Result<Diagnostics> {
    let cfg = &model.config;
    let mut out = Diagnostics {
        traces: 0,
        feature_stability: 0.0,
        skipped_positions: 0,
        co_direction: 0.0,
        threshold,
        per_trace_stability: Vec::new(),
        alignment: (0..cfg.layers)
            .map(|layer| LayerAlignment { layer, self_sum: 0.0, cross_sum: 0.0, bound: 0.0 })
            .collect(),
        features: Vec::new(),
    };
    let mut co_sum = 0.0;
    for (k, traj) in trajectories.iter().enumerate() {
        for (c, series) in traj.channels.iter().enumerate() {
            let (x, _, _) = normalize_input(&series[..cfg.l_seq]);
            let mut patches = vec![0.0; cfg.n_patches() * cfg.patch_len];
            crate::datapipe::patch_rows_into(&x, cfg.patch_config(), &mut patches);
            let patches = Matrix::from_vec(cfg.n_patches(), cfg.patch_len, patches)?;
            let (_, trace) = forward_trace(&model.params, cfg, &patches)?;
            let fs = feature_stability(&trace)?;
            out.per_trace_stability.push(fs.mean);
            out.skipped_positions += fs.skipped;
            co_sum += co_direction_ratio(&trace, threshold)?;
            for (l, heads) in trace.attention.iter().enumerate() {
                for a in heads {
                    let t = alignment_terms(a, &trace.hidden[l])?;
                    let w = 1.0 / heads.len() as f64;
                    out.alignment[l].self_sum += w * t.self_sum();
                    out.alignment[l].cross_sum += w * t.cross_sum();
                    out.alignment[l].bound += w * t.bound;
                }
            }
            let last = trace.hidden.last().expect("nonempty trace");
            for p in 0..last.rows() {
                out.features.push(FeatureRow { trajectory: k, channel: c, patch: p, values: last.row(p).to_vec() });
            }
            out.traces += 1;
        }
    }
    let n = out.traces.max(1) as f64;
    out.feature_stability = out.per_trace_stability.iter().sum::<f64>() / n;
    out.co_direction = co_sum / n;
    for a in &mut out.alignment {
        a.self_sum /= n;
        a.cross_sum /= n;
        a.bound /= n;
    }
    Ok(out)
}
