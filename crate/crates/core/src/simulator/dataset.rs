//! Randomized scenario sampling and batch trajectory generation.

use log::warn;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate, FaultScenario, SimConfig, MAX_CLEARING_DURATION};
use super::system::PowerSystemSpec;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::parallel;

/// Resampling attempts per scenario before it is skipped.
pub const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub sim: SimConfig,
    /// Fault onset (s).
    pub t_fault: f64,
    pub load_range: (f64, f64),
    /// Upper bound of the uniform clearing-duration draw (s).
    pub max_duration: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { sim: SimConfig::default(), t_fault: 1.0, load_range: (0.7, 1.3), max_duration: MAX_CLEARING_DURATION }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        let (lo, hi) = self.load_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("load range {:?} is invalid", self.load_range)));
        }
        if !(self.max_duration > 0.0 && self.max_duration <= MAX_CLEARING_DURATION) {
            return Err(Error::Config(format!(
                "maximum clearing duration {} must lie in (0, {MAX_CLEARING_DURATION}]",
                self.max_duration
            )));
        }
        if !(self.t_fault >= 0.0 && self.t_fault + self.max_duration < self.sim.horizon) {
            return Err(Error::Config(format!("fault onset {} leaves no post-fault horizon", self.t_fault)));
        }
        Ok(())
    }
}

/// RNG stream for one scenario; independent of evaluation order.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_scenario(
    spec: &PowerSystemSpec,
    contingency_order: usize,
    config: &DatasetConfig,
    rng: &mut impl Rng,
) -> FaultScenario {
    let (lo, hi) = config.load_range;
    let load_scale = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let mut lines = sample(rng, spec.faultable_lines(), contingency_order).into_vec();
    lines.sort_unstable();
    // 1 − u with u ∈ [0, 1) maps onto the half-open interval (0, 1].
    let duration = config.max_duration * (1.0 - rng.random::<f64>());
    FaultScenario { lines, t_fault: config.t_fault, t_clear: config.t_fault + duration, load_scale }
}

/// Errors that call for a fresh scenario draw instead of aborting.
fn is_resamplable(err: &Error) -> bool {
    matches!(err, Error::InfeasibleDispatch(_) | Error::IntegrationBlowup { .. } | Error::Config(_))
}

fn generate_one(
    spec: &PowerSystemSpec,
    index: usize,
    seed: u64,
    contingency_order: usize,
    config: &DatasetConfig,
) -> Result<Option<Trajectory>> {
    let mut rng = scenario_rng(seed, index);
    let mut last_err = None;
    for _ in 0..MAX_RESAMPLES {
        let scenario = sample_scenario(spec, contingency_order, config, &mut rng);
        match integrate(spec, &scenario, &config.sim) {
            Ok(traj) => return Ok(Some(traj)),
            Err(e) if is_resamplable(&e) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    warn!(
        "scenario {index} skipped after {MAX_RESAMPLES} attempts: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    );
    Ok(None)
}

/// Simulates `n_scenarios` random contingencies. Output order follows the
/// scenario index; skipped scenarios leave no entry.
pub fn generate_dataset(
    spec: &PowerSystemSpec,
    n_scenarios: usize,
    seed: u64,
    contingency_order: usize,
    config: &DatasetConfig,
) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    config.validate()?;
    if contingency_order == 0 || contingency_order > spec.faultable_lines() {
        return Err(Error::Config(format!(
            "contingency order {contingency_order} must lie in 1..={}",
            spec.faultable_lines()
        )));
    }
    if contingency_order > 1 && spec.network.is_none() {
        return Err(Error::Config("multi-line contingencies need the unreduced network in the spec file".into()));
    }
    let results: Vec<Result<Option<Trajectory>>> = parallel::install(|| {
        (0..n_scenarios).into_par_iter().map(|i| generate_one(spec, i, seed, contingency_order, config)).collect()
    });
    let mut out = Vec::with_capacity(n_scenarios);
    for r in results {
        if let Some(t) = r? {
            out.push(t);
        }
    }
    Ok(out)
}
