use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::simulator::{builtin, DatasetConfig, PowerSystemSpec, SimConfig};
use crate::training::{SchSConfig, SurrogateConfig, TeaFConfig};

/// Sequence geometry overriding the model profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub l_seq: usize,
    pub l_pred: usize,
    pub patch_len: usize,
    pub stride: usize,
}

/// Everything one experiment run needs. Every field has a default, so a
/// config file only lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled system name (`three_machine`, `nine_machine`) or a JSON spec path.
    pub system: String,
    /// System for cross-system and few-shot runs.
    pub target_system: String,
    pub scenarios: usize,
    pub target_scenarios: usize,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub contingency_order: usize,
    pub dataset: DatasetConfig,
    /// Harder-contingency test set: contingency order and load range.
    pub harder_order: usize,
    pub harder_load_range: (f64, f64),
    pub harder_scenarios: usize,
    pub profile: String,
    pub geometry: Option<Geometry>,
    pub surrogate: SurrogateConfig,
    pub teaf: TeaFConfig,
    pub schs: SchSConfig,
    pub seed: u64,
    /// Number of seeds in sweeps (ablation, few-shot, pre-training check).
    pub seeds: usize,
    pub fractions: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: "three_machine".into(),
            target_system: "nine_machine".into(),
            scenarios: 300,
            target_scenarios: 300,
            split: [0.8, 0.1, 0.1],
            contingency_order: 1,
            dataset: DatasetConfig {
                sim: SimConfig { horizon: 3.0, ..SimConfig::default() },
                ..DatasetConfig::default()
            },
            harder_order: 1,
            harder_load_range: (1.15, 1.3),
            harder_scenarios: 30,
            profile: "desk".into(),
            geometry: Some(Geometry { l_seq: 65, l_pred: 5, patch_len: 16, stride: 8 }),
            surrogate: SurrogateConfig::default(),
            teaf: TeaFConfig::default(),
            schs: SchSConfig::default(),
            seed: 1,
            seeds: 5,
            fractions: vec![0.0, 0.05, 0.25, 1.0],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {:?} must be in [0, 1] and sum to 1", self.split)));
        }
        if self.scenarios == 0 || self.seeds == 0 {
            return Err(Error::Config("scenario and seed counts must be positive".into()));
        }
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("few-shot fractions {:?} must lie in [0, 1]", self.fractions)));
        }
        self.dataset.validate()?;
        self.teaf.validate()?;
        self.schs.validate()?;
        self.model_config()?;
        for name in [&self.system, &self.target_system] {
            if builtin::by_name(name).is_none() && !Path::new(name).exists() {
                return Err(Error::Config(format!("system {name} is neither bundled nor an existing file")));
            }
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::by_profile(&self.profile)
            .ok_or_else(|| Error::Config(format!("unknown model profile {}", self.profile)))?;
        if let Some(g) = self.geometry {
            cfg.l_seq = g.l_seq;
            cfg.l_pred = g.l_pred;
            cfg.patch_len = g.patch_len;
            cfg.stride = g.stride;
        }
        cfg.validate()?;
        let samples = self.dataset.sim.steps();
        if samples < cfg.l_seq + cfg.l_pred {
            return Err(Error::Config(format!(
                "trajectories of {samples} samples are shorter than L_seq + L_pred = {}",
                cfg.l_seq + cfg.l_pred
            )));
        }
        Ok(cfg)
    }

    /// Dataset settings of the harder-contingency test set.
    pub fn harder_dataset(&self) -> DatasetConfig {
        DatasetConfig { load_range: self.harder_load_range, ..self.dataset.clone() }
    }
}

/// A bundled system by name, otherwise a JSON spec file.
pub fn load_system(name: &str) -> Result<PowerSystemSpec> {
    match builtin::by_name(name) {
        Some(spec) => Ok(spec),
        None => PowerSystemSpec::load(Path::new(name)),
    }
}
