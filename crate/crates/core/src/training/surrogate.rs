//! Synthetic pre-training corpus and the pre-training run that stands in for
//! a language-model backbone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::fit::{fit_teacher_forced, FitOptions, FitSummary, SeriesWindows};
use super::log::TrainLog;
use crate::error::{Error, Result};
use crate::model::{FreezeMask, Model, ModelConfig};
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFamily {
    Sinusoids,
    Ramp,
    Chirp,
    SwitchedAr,
}

impl SeriesFamily {
    pub const ALL: [SeriesFamily; 4] = [Self::Sinusoids, Self::Ramp, Self::Chirp, Self::SwitchedAr];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// Training series; families rotate through [`SeriesFamily::ALL`].
    pub series: usize,
    pub held_out_series: usize,
    pub length: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub samples_per_epoch: Option<usize>,
    pub val_samples: Option<usize>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            series: 512,
            held_out_series: 64,
            length: 160,
            epochs: 8,
            lr: 1e-3,
            batch_size: 32,
            samples_per_epoch: Some(2048),
            val_samples: Some(512),
        }
    }
}

/// One synthetic series of `len` samples.
pub fn synth_series<R: Rng>(family: SeriesFamily, len: usize, rng: &mut R) -> Vec<f64> {
    let offset = rng.random_range(-2.0..2.0);
    match family {
        SeriesFamily::Sinusoids => {
            let terms: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..=3))
                .map(|_| {
                    let damping = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.03) };
                    (
                        rng.random_range(0.1..2.0),
                        rng.random_range(0.03..0.6),
                        damping,
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            (0..len)
                .map(|t| {
                    let t = t as f64;
                    offset + terms.iter().map(|&(a, w, d, ph)| a * (-d * t).exp() * (w * t + ph).sin()).sum::<f64>()
                })
                .collect()
        }
        SeriesFamily::Ramp => {
            let amp = rng.random_range(-5.0..5.0);
            let tau = rng.random_range(3.0..80.0);
            let onset = rng.random_range(-(len as f64) * 0.5..=0.0);
            (0..len)
                .map(|t| {
                    let s = (t as f64 - onset).max(0.0);
                    offset + amp * (1.0 - (-s / tau).exp())
                })
                .collect()
        }
        SeriesFamily::Chirp => {
            let amp = rng.random_range(0.2..2.0);
            let w0 = rng.random_range(0.02..0.3);
            let beta = rng.random_range(-0.5..1.0) * w0 / len as f64;
            let d = rng.random_range(0.0..0.01);
            (0..len)
                .map(|t| {
                    let t = t as f64;
                    offset + amp * (-d * t).exp() * (w0 * t + 0.5 * beta * t * t).sin()
                })
                .collect()
        }
        SeriesFamily::SwitchedAr => {
            // AR(2) regimes with complex poles inside the unit circle.
            let regime = |rng: &mut R| {
                let r: f64 = rng.random_range(0.85..0.995);
                let w: f64 = rng.random_range(0.05..0.8);
                (2.0 * r * w.cos(), -r * r)
            };
            let noise = Normal::new(0.0, rng.random_range(0.005..0.05)).unwrap();
            let mut coef = regime(rng);
            let switch_p = rng.random_range(0.0..0.03);
            let mut x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            while x.len() < len {
                if rng.random_bool(switch_p) {
                    coef = regime(rng);
                }
                let n = x.len();
                x.push(coef.0 * x[n - 1] + coef.1 * x[n - 2] + noise.sample(rng));
            }
            x.truncate(len);
            x.iter().map(|v| v + offset).collect()
        }
    }
}

/// `count` series, family `i mod 4` for series `i`, each from its own stream.
pub fn synth_corpus(count: usize, len: usize, seed: u64, stream_base: u64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + i as u64);
            synth_series(SeriesFamily::ALL[i % 4], len, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    /// Held-out normalized loss at initialization and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub summary: FitSummary,
}

/// Initializes a model from `seed` and trains every array on the synthetic
/// corpus. The returned model is marked for fine-tuning (blocks frozen).
pub fn surrogate_pretrain<T: Scalar>(
    config: &ModelConfig,
    corpus: &SurrogateConfig,
    seed: u64,
    log: &mut TrainLog,
) -> Result<(Model<T>, SurrogateReport)> {
    config.validate()?;
    if corpus.series == 0 || corpus.held_out_series == 0 {
        return Err(Error::Config("surrogate corpus needs training and held-out series".into()));
    }
    if corpus.length < config.l_seq + config.l_pred {
        return Err(Error::Config(format!(
            "surrogate series length {} is below L_seq + L_pred = {}",
            corpus.length,
            config.l_seq + config.l_pred
        )));
    }
    let train = synth_corpus(corpus.series, corpus.length, seed, 0);
    let held = synth_corpus(corpus.held_out_series, corpus.length, seed, 1 << 32);
    let mut model = Model::<T>::init(config.clone(), seed)?;
    model.freeze = FreezeMask::all_trainable(&model.params);
    let tw = SeriesWindows::new(train.iter().map(Vec::as_slice).collect(), config.l_seq, config.l_pred);
    let hw = SeriesWindows::new(held.iter().map(Vec::as_slice).collect(), config.l_seq, config.l_pred);
    let opts = FitOptions {
        stage: "pretrain".into(),
        epochs: corpus.epochs,
        lr: corpus.lr,
        batch_size: corpus.batch_size,
        samples_per_epoch: corpus.samples_per_epoch,
        val_samples: corpus.val_samples,
        seed,
    };
    let summary = fit_teacher_forced(&mut model, &tw, &hw, &opts, log)?;
    let report = SurrogateReport {
        initial_loss: summary.initial_val.unwrap_or(f64::NAN),
        final_loss: summary.best_val.unwrap_or(f64::NAN),
        summary,
    };
    model.freeze_blocks();
    Ok((model, report))
}
