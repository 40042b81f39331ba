//! Categorized rollout error: MAE and MSE over stable, unstable and all
//! trajectories, in physical units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Scalar;
use crate::rollout::RolloutResult;
use crate::simulator::{StabilityLabel, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityCategory {
    S,
    U,
    H,
}

impl StabilityCategory {
    pub const ALL: [StabilityCategory; 3] = [Self::S, Self::U, Self::H];

    pub fn contains(self, label: StabilityLabel) -> bool {
        match self {
            Self::S => label == StabilityLabel::Stable,
            Self::U => label == StabilityLabel::Unstable,
            Self::H => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: StabilityCategory,
    pub trajectories: usize,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: usize,
    pub mae: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Only categories with at least one trajectory appear.
    pub categories: Vec<CategoryMetrics>,
    /// Per channel index over all trajectories.
    pub per_channel: Vec<ChannelMetrics>,
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn get(&self, category: StabilityCategory) -> Option<&CategoryMetrics> {
        self.categories.iter().find(|c| c.category == category)
    }

    pub const CSV_HEADER: &'static str = "fingerprint,category,trajectories,mae,mse";

    /// One CSV row per present category, without header.
    pub fn csv_rows(&self) -> Vec<String> {
        self.categories
            .iter()
            .map(|c| format!("{},{:?},{},{:e},{:e}", self.fingerprint, c.category, c.trajectories, c.mae, c.mse))
            .collect()
    }
}

/// First 8 bytes of the SHA-256 of the JSON form of `value`, in hex.
pub fn fingerprint<S: Serialize>(value: &S) -> Result<String> {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(serde_json::to_vec(value)?);
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

/// Per-trajectory absolute and squared error sums and sample count.
pub fn trajectory_errors<T: Scalar>(
    pred: &RolloutResult<T>,
    truth: &Trajectory,
    l_seq: usize,
) -> Result<(f64, f64, usize)> {
    if pred.predictions.len() != truth.n_x() {
        return Err(Error::Shape(format!(
            "{} predicted channels for a trajectory with {}",
            pred.predictions.len(),
            truth.n_x()
        )));
    }
    let t_pred = truth.len().checked_sub(l_seq).filter(|&n| n > 0).ok_or_else(|| {
        Error::Shape(format!("trajectory of {} samples has nothing after L_seq = {l_seq}", truth.len()))
    })?;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in pred.predictions.iter().zip(&truth.channels) {
        if p.len() != t_pred {
            return Err(Error::Shape(format!("prediction of {} samples, expected {t_pred}", p.len())));
        }
        for (&a, &b) in p.iter().zip(&t[l_seq..]) {
            let e = a.as_f64() - b;
            abs += e.abs();
            sq += e * e;
        }
    }
    Ok((abs, sq, truth.n_x() * t_pred))
}

/// Mean absolute and squared error per category, each trajectory weighted
/// by its `n_x · (T − L_seq)` samples. Categories come from the truth labels.
pub fn compute_metrics<T: Scalar>(
    preds: &[RolloutResult<T>],
    truths: &[Trajectory],
    l_seq: usize,
    fingerprint: &str,
) -> Result<MetricsReport> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} trajectories", preds.len(), truths.len())));
    }
    let errs: Vec<(f64, f64, usize)> =
        preds.iter().zip(truths).map(|(p, t)| trajectory_errors(p, t, l_seq)).collect::<Result<_>>()?;
    let mut categories = Vec::new();
    for cat in StabilityCategory::ALL {
        let (mut abs, mut sq, mut n, mut count) = (0.0, 0.0, 0usize, 0usize);
        for (e, t) in errs.iter().zip(truths) {
            if cat.contains(t.label) {
                abs += e.0;
                sq += e.1;
                n += e.2;
                count += 1;
            }
        }
        if count > 0 {
            categories.push(CategoryMetrics {
                category: cat,
                trajectories: count,
                mae: abs / n as f64,
                mse: sq / n as f64,
            });
        }
    }
    let n_x = truths.iter().map(Trajectory::n_x).max().unwrap_or(0);
    let per_channel = (0..n_x)
        .map(|c| {
            let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
            for (p, t) in preds.iter().zip(truths) {
                if let (Some(pc), Some(tc)) = (p.predictions.get(c), t.channels.get(c)) {
                    for (&a, &b) in pc.iter().zip(&tc[l_seq..]) {
                        let e = a.as_f64() - b;
                        abs += e.abs();
                        sq += e * e;
                        n += 1;
                    }
                }
            }
            ChannelMetrics { channel: c, mae: abs / n.max(1) as f64, mse: sq / n.max(1) as f64 }
        })
        .collect();
    Ok(MetricsReport { categories, per_channel, fingerprint: fingerprint.to_string() })
}
