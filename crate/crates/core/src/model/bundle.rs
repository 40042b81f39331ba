use std::path::Path;

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::config::ModelConfig;
use super::params::{FreezeMask, ModelParameters};
use crate::error::Result;
use crate::numerics::Scalar;

/// Configuration, parameters and freeze mask travelling together.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParameters<T>,
    pub freeze: FreezeMask,
}

impl<T: Scalar> Model<T> {
    /// Freshly initialized, every array trainable.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParameters::init(&config, seed)?;
        let freeze = FreezeMask::all_trainable(&params);
        Ok(Self { config, params, freeze })
    }

    /// Switches to the fine-tuning mask: block attention and feed-forward
    /// weights frozen.
    pub fn freeze_blocks(&mut self) {
        self.freeze = FreezeMask::finetune(&self.params);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.params, &self.freeze, &self.config, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, freeze, config) = load_checkpoint(path)?;
        Ok(Self { config, params, freeze })
    }
}
