use serde::{Deserialize, Serialize};

use crate::datapipe::{patch_count, PatchConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Causal,
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub l_seq: usize,
    pub l_pred: usize,
    pub attention: AttentionMode,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl ModelConfig {
    /// Desk-scale causal profile: 3 layers, 4 heads, width 64.
    pub fn desk() -> Self {
        Self {
            layers: 3,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            patch_len: 16,
            stride: 8,
            l_seq: 65,
            l_pred: 1,
            attention: AttentionMode::Causal,
            ln_eps: default_ln_eps(),
        }
    }

    /// Full-scale causal profile: 12 layers, 12 heads, width 768.
    pub fn full() -> Self {
        Self { layers: 12, heads: 12, d_model: 768, d_ff: 4 * 768, ..Self::desk() }
    }

    /// Bidirectional encoder baseline: 3 layers, 6 heads, width 126 (the
    /// multiple of 6 nearest 128).
    pub fn encoder_baseline() -> Self {
        Self {
            layers: 3,
            heads: 6,
            d_model: 126,
            d_ff: 4 * 126,
            attention: AttentionMode::Bidirectional,
            ..Self::desk()
        }
    }

    pub fn by_profile(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "full" => Some(Self::full()),
            "encoder" => Some(Self::encoder_baseline()),
            _ => None,
        }
    }

    pub fn patch_config(&self) -> PatchConfig {
        PatchConfig { patch_len: self.patch_len, stride: self.stride }
    }

    /// Patch count `P`.
    pub fn n_patches(&self) -> usize {
        (self.l_seq - self.patch_len) / self.stride + 1
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        patch_count(self.l_seq, self.patch_config())?;
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 || self.l_pred == 0 {
            return Err(Error::Config(format!("model dimensions must be positive: {self:?}")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads)));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("layer-norm eps must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid() {
        for c in [ModelConfig::desk(), ModelConfig::full(), ModelConfig::encoder_baseline()] {
            c.validate().unwrap();
            assert_eq!(c.n_patches(), 7);
        }
        assert_eq!(ModelConfig::full().d_head(), 64);
    }

    #[test]
    fn indivisible_heads_rejected() {
        let c = ModelConfig { heads: 5, ..ModelConfig::desk() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
