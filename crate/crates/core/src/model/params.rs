use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet, Scalar};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

pub(crate) const EMBED_W: usize = 0;
pub(crate) const EMBED_B: usize = 1;
pub(crate) const EMBED_POS: usize = 2;
pub(crate) const PER_LAYER: usize = 12;

/// Offsets of the per-layer arrays relative to the layer base index.
pub(crate) mod slot {
    pub const WQ: usize = 0;
    pub const WK: usize = 1;
    pub const WV: usize = 2;
    pub const WO: usize = 3;
    pub const LN1_G: usize = 4;
    pub const LN1_B: usize = 5;
    pub const W1: usize = 6;
    pub const B1: usize = 7;
    pub const W2: usize = 8;
    pub const B2: usize = 9;
    pub const LN2_G: usize = 10;
    pub const LN2_B: usize = 11;
}

pub(crate) fn layer_base(l: usize) -> usize {
    3 + PER_LAYER * l
}

pub(crate) fn head_w(layers: usize) -> usize {
    3 + PER_LAYER * layers
}

pub(crate) fn head_b(layers: usize) -> usize {
    head_w(layers) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Gaussian,
    Zeros,
    Ones,
}

/// Name, shape, rank and initializer of every array, in storage order.
fn layout(cfg: &ModelConfig) -> Vec<(String, usize, usize, u8, Init)> {
    let (d, f, p) = (cfg.d_model, cfg.d_ff, cfg.n_patches());
    let mut out = vec![
        ("embed.w".to_string(), cfg.patch_len, d, 2, Init::Gaussian),
        ("embed.b".to_string(), 1, d, 1, Init::Zeros),
        ("embed.pos".to_string(), p, d, 2, Init::Zeros),
    ];
    for l in 0..cfg.layers {
        let n = |s: &str| format!("blocks.{l}.{s}");
        out.extend([
            (n("attn.wq"), d, d, 2, Init::Gaussian),
            (n("attn.wk"), d, d, 2, Init::Gaussian),
            (n("attn.wv"), d, d, 2, Init::Gaussian),
            (n("attn.wo"), d, d, 2, Init::Gaussian),
            (n("ln1.gain"), 1, d, 1, Init::Ones),
            (n("ln1.bias"), 1, d, 1, Init::Zeros),
            (n("ffn.w1"), d, f, 2, Init::Gaussian),
            (n("ffn.b1"), 1, f, 1, Init::Zeros),
            (n("ffn.w2"), f, d, 2, Init::Gaussian),
            (n("ffn.b2"), 1, d, 1, Init::Zeros),
            (n("ln2.gain"), 1, d, 1, Init::Ones),
            (n("ln2.bias"), 1, d, 1, Init::Zeros),
        ]);
    }
    out.push(("head.w".to_string(), p * d, cfg.l_pred, 2, Init::Gaussian));
    out.push(("head.b".to_string(), 1, cfg.l_pred, 1, Init::Zeros));
    out
}

/// One named learnable array. Rank-1 arrays are stored as a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray<T> {
    pub name: String,
    pub rank: u8,
    pub value: Matrix<T>,
}

impl<T: Scalar> ParamArray<T> {
    pub fn dims(&self) -> Vec<usize> {
        if self.rank == 1 {
            vec![self.value.cols()]
        } else {
            vec![self.value.rows(), self.value.cols()]
        }
    }

    pub fn len(&self) -> usize {
        self.value.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters<T> {
    pub arrays: Vec<ParamArray<T>>,
}

impl<T: Scalar> ModelParameters<T> {
    /// Every array filled per its initializer with Gaussian entries drawn
    /// from `N(0, INIT_STD²)`, deterministic per seed.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let arrays = layout(cfg)
            .into_iter()
            .map(|(name, rows, cols, rank, init)| {
                let value = match init {
                    Init::Zeros => Matrix::zeros(rows, cols),
                    Init::Ones => Matrix::filled(rows, cols, T::one()),
                    Init::Gaussian => {
                        let data = (0..rows * cols).map(|_| T::lit(normal.sample(&mut rng))).collect();
                        Matrix::from_vec(rows, cols, data).expect("layout shape")
                    }
                };
                ParamArray { name, rank, value }
            })
            .collect();
        Ok(Self { arrays })
    }

    /// Zero-valued parameters with the layout of `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            arrays: layout(cfg)
                .into_iter()
                .map(|(name, rows, cols, rank, _)| ParamArray { name, rank, value: Matrix::zeros(rows, cols) })
                .collect(),
        }
    }

    /// Checks names and shapes against the layout of `cfg`; reports the
    /// first mismatching array.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = layout(cfg);
        if expected.len() != self.arrays.len() {
            return Err(Error::Shape(format!("expected {} arrays, found {}", expected.len(), self.arrays.len())));
        }
        for ((name, rows, cols, rank, _), a) in expected.iter().zip(&self.arrays) {
            if *name != a.name || a.value.shape() != (*rows, *cols) || *rank != a.rank {
                return Err(Error::Shape(format!(
                    "array {} has shape {:?}, expected {name} with shape {:?}",
                    a.name,
                    a.dims(),
                    if *rank == 1 { vec![*cols] } else { vec![*rows, *cols] }
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, index: usize) -> &Matrix<T> {
        &self.arrays[index].value
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Matrix<T> {
        &mut self.arrays[index].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.arrays.iter().position(|a| a.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Matrix<T>> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn scalar_count(&self) -> usize {
        self.arrays.iter().map(ParamArray::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays.iter().all(|a| a.value.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ModelParameters<U> {
        ModelParameters {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray { name: a.name.clone(), rank: a.rank, value: a.value.cast() })
                .collect(),
        }
    }
}

impl<T: Scalar> ParamSet<T> for ModelParameters<T> {
    fn array_count(&self) -> usize {
        self.arrays.len()
    }

    fn array(&self, i: usize) -> &[T] {
        self.arrays[i].value.data()
    }

    fn array_mut(&mut self, i: usize) -> &mut [T] {
        self.arrays[i].value.data_mut()
    }
}

/// Per-array trainable flags, aligned with [`ModelParameters::arrays`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub trainable: Vec<bool>,
}

impl FreezeMask {
    pub fn all_trainable<T: Scalar>(params: &ModelParameters<T>) -> Self {
        Self { trainable: vec![true; params.arrays.len()] }
    }

    /// Attention and feed-forward weights of every block frozen; embedding,
    /// positions, layer norms and the output head trainable.
    pub fn finetune<T: Scalar>(params: &ModelParameters<T>) -> Self {
        Self {
            trainable: params
                .arrays
                .iter()
                .map(|a| !(a.name.starts_with("blocks.") && (a.name.contains(".attn.") || a.name.contains(".ffn."))))
                .collect(),
        }
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    /// `(trainable scalars, total scalars)`.
    pub fn trainable_count<T: Scalar>(&self, params: &ModelParameters<T>) -> (usize, usize) {
        let trainable = params.arrays.iter().zip(&self.trainable).filter(|(_, &t)| t).map(|(a, _)| a.len()).sum();
        (trainable, params.scalar_count())
    }

    pub fn trainable_fraction<T: Scalar>(&self, params: &ModelParameters<T>) -> f64 {
        let (t, n) = self.trainable_count(params);
        t as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_shaped() {
        let cfg = ModelConfig::desk();
        let a = ModelParameters::<f64>::init(&cfg, 3).unwrap();
        let b = ModelParameters::<f64>::init(&cfg, 3).unwrap();
        let c = ModelParameters::<f64>::init(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_finite());
        a.check_layout(&cfg).unwrap();
        assert_eq!(a.arrays.len(), 3 + 12 * 3 + 2);
        assert_eq!(a.by_name("embed.w").unwrap().shape(), (16, 64));
        assert_eq!(a.by_name("head.w").unwrap().shape(), (7 * 64, 1));
        assert!(a.by_name("embed.pos").unwrap().data().iter().all(|&x| x == 0.0));
        assert!(a.by_name("blocks.2.ln2.gain").unwrap().data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn init_std_is_close_to_target() {
        let p = ModelParameters::<f64>::init(&ModelConfig::desk(), 1).unwrap();
        let w = p.by_name("blocks.0.ffn.w1").unwrap().data();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-3);
        assert!((std - INIT_STD).abs() < 1e-3);
    }

    #[test]
    fn default_freeze_mask_matches_contract() {
        let p = ModelParameters::<f64>::init(&ModelConfig::desk(), 0).unwrap();
        let m = FreezeMask::finetune(&p);
        for (a, &t) in p.arrays.iter().zip(&m.trainable) {
            let frozen = a.name.contains(".attn.") || a.name.contains(".ffn.");
            assert_eq!(t, !frozen, "{}", a.name);
        }
        let f = m.trainable_fraction(&p);
        assert!(f > 0.0 && f < 0.1, "fraction {f}");
    }

    #[test]
    fn layout_mismatch_names_array() {
        let cfg = ModelConfig::desk();
        let mut p = ModelParameters::<f64>::init(&cfg, 0).unwrap();
        p.arrays[5].value = Matrix::zeros(3, 3);
        let err = p.check_layout(&cfg).unwrap_err().to_string();
        assert!(err.contains("blocks.0.attn.wv"), "{err}");
    }
}
