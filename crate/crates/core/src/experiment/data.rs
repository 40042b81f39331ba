use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{load_system, ExperimentConfig};
use crate::error::Result;
use crate::simulator::{generate_dataset, read_dataset, write_dataset, DatasetConfig, PowerSystemSpec, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub trajectories: usize,
    pub stable: usize,
    pub unstable: usize,
}

impl LabelCounts {
    pub fn of(trajectories: &[Trajectory]) -> Self {
        let unstable = trajectories.iter().filter(|t| t.is_unstable()).count();
        Self { trajectories: trajectories.len(), stable: trajectories.len() - unstable, unstable }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub system: String,
    pub seed: u64,
    pub contingency_order: usize,
    pub scenarios_requested: usize,
    pub train: LabelCounts,
    pub val: LabelCounts,
    pub test: LabelCounts,
}

/// Train and validation counts are floored; the test split takes the rest.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> (usize, usize, usize) {
    let train = ((n as f64 * fractions[0]) + 1e-9).floor() as usize;
    let val = (((n as f64 * fractions[1]) + 1e-9).floor() as usize).min(n - train);
    (train, val, n - train - val)
}

pub fn split(mut trajectories: Vec<Trajectory>, fractions: [f64; 3]) -> Splits {
    let (a, b, _) = split_counts(trajectories.len(), fractions);
    let test = trajectories.split_off(a + b);
    let val = trajectories.split_off(a);
    Splits { train: trajectories, val, test }
}

pub fn generate_splits(
    spec: &PowerSystemSpec,
    scenarios: usize,
    seed: u64,
    order: usize,
    dataset: &DatasetConfig,
    fractions: [f64; 3],
) -> Result<Splits> {
    Ok(split(generate_dataset(spec, scenarios, seed, order, dataset)?, fractions))
}

/// Scenario seed offset of the harder-contingency set, so its draws do not
/// repeat the in-distribution ones.
pub const HARDER_SEED_OFFSET: u64 = 0x5eed_0001;

/// In-distribution splits on the training system.
pub fn source_splits(exp: &ExperimentConfig) -> Result<Splits> {
    let spec = load_system(&exp.system)?;
    generate_splits(&spec, exp.scenarios, exp.seed, exp.contingency_order, &exp.dataset, exp.split)
}

/// Harder-contingency test set on the training system: heavier loading and
/// the configured contingency order.
pub fn harder_set(exp: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let spec = load_system(&exp.system)?;
    generate_dataset(
        &spec,
        exp.harder_scenarios,
        exp.seed.wrapping_add(HARDER_SEED_OFFSET),
        exp.harder_order,
        &exp.harder_dataset(),
    )
}

/// Splits on the cross-system target.
pub fn target_splits(exp: &ExperimentConfig) -> Result<Splits> {
    let spec = load_system(&exp.target_system)?;
    generate_splits(&spec, exp.target_scenarios, exp.seed, exp.contingency_order, &exp.dataset, exp.split)
}

impl Splits {
    pub fn manifest(&self, system: &str, seed: u64, order: usize, requested: usize) -> Manifest {
        Manifest {
            system: system.to_string(),
            seed,
            contingency_order: order,
            scenarios_requested: requested,
            train: LabelCounts::of(&self.train),
            val: LabelCounts::of(&self.val),
            test: LabelCounts::of(&self.test),
        }
    }

    /// `train.tsa`, `val.tsa` and `test.tsa` in `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_dataset(&dir.join("train.tsa"), &self.train)?;
        write_dataset(&dir.join("val.tsa"), &self.val)?;
        write_dataset(&dir.join("test.tsa"), &self.test)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(Self {
            train: read_dataset(&dir.join("train.tsa"))?,
            val: read_dataset(&dir.join("val.tsa"))?,
            test: read_dataset(&dir.join("test.tsa"))?,
        })
    }
}

/// `⌊f·N⌋` trajectories chosen without replacement, in dataset order.
pub fn subsample(trajectories: &[Trajectory], fraction: f64, seed: u64) -> Vec<Trajectory> {
    let n = trajectories.len();
    let k = ((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| trajectories[i].clone()).collect()
}
