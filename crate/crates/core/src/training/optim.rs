//! Adam, the cosine learning-rate schedule, global-norm clipping and early
//! stopping.

use serde::{Deserialize, Serialize};

use crate::model::{FreezeMask, ModelParameters};
use crate::numerics::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const CLIP_NORM: f64 = 1.0;
pub const PATIENCE: usize = 3;
pub const MIN_DELTA: f64 = 1e-6;

/// Moment accumulators, present only for trainable arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Option<Vec<T>>>,
    pub v: Vec<Option<Vec<T>>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ModelParameters<T>, freeze: &FreezeMask) -> Self {
        let moments = || {
            params
                .arrays
                .iter()
                .zip(&freeze.trainable)
                .map(|(a, &t)| t.then(|| vec![T::zero(); a.len()]))
                .collect::<Vec<_>>()
        };
        Self { m: moments(), v: moments(), step: 0 }
    }
}

/// One bias-corrected Adam update of every array that has moment state.
pub fn adam_step<T: Scalar>(
    params: &mut ModelParameters<T>,
    grads: &ModelParameters<T>,
    state: &mut AdamState<T>,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(lr), T::lit(ADAM_EPS));
    for (k, (m, v)) in state.m.iter_mut().zip(state.v.iter_mut()).enumerate() {
        let (Some(m), Some(v)) = (m.as_mut(), v.as_mut()) else { continue };
        let g = grads.get(k).data();
        let w = params.get_mut(k).data_mut();
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Cosine annealing from `alpha` at epoch 0 to `alpha / 100` at the last of
/// `epochs` epochs.
pub fn cosine_lr(alpha: f64, epoch: usize, epochs: usize) -> f64 {
    let floor = alpha / 100.0;
    if epochs <= 1 {
        return alpha;
    }
    let progress = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
    floor + 0.5 * (alpha - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Rescales the trainable gradients to global norm `max_norm` when larger.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelParameters<T>, freeze: &FreezeMask, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (a, &t) in grads.arrays.iter().zip(&freeze.trainable) {
        if t {
            sq += a.value.data().iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let s = T::lit(max_norm / norm);
        for (a, &t) in grads.arrays.iter_mut().zip(&freeze.trainable) {
            if t {
                a.value.data_mut().iter_mut().for_each(|g| *g *= s);
            }
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience-based early stopping that remembers the best parameters seen,
/// including the ones it was created with.
#[derive(Debug, Clone)]
pub struct EarlyStopping<T> {
    pub best_loss: f64,
    pub best_epoch: usize,
    pub bad_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    best: ModelParameters<T>,
}

impl<T: Scalar> EarlyStopping<T> {
    pub fn new(initial_loss: f64, initial: &ModelParameters<T>) -> Self {
        Self {
            best_loss: if initial_loss.is_finite() { initial_loss } else { f64::INFINITY },
            best_epoch: 0,
            bad_epochs: 0,
            patience: PATIENCE,
            min_delta: MIN_DELTA,
            best: initial.clone(),
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64, params: &ModelParameters<T>) -> StopDecision {
        if loss < self.best_loss - self.min_delta {
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            self.best.clone_from(params);
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Wait
        }
    }

    pub fn into_best(self) -> ModelParameters<T> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ParamArray};
    use crate::numerics::Matrix;

    fn scalar(w: f64) -> ModelParameters<f64> {
        ModelParameters { arrays: vec![ParamArray { name: "w".into(), rank: 1, value: Matrix::filled(1, 1, w) }] }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = ModelConfig { layers: 1, heads: 1, d_model: 4, d_ff: 4, ..ModelConfig::desk() };
        let mut p = ModelParameters::<f64>::init(&cfg, 3).unwrap();
        let before = p.clone();
        let freeze = FreezeMask::all_trainable(&p);
        let mut st = AdamState::new(&p, &freeze);
        for _ in 0..5 {
            adam_step(&mut p, &ModelParameters::zeros(&cfg), &mut st, 1e-2);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = scalar(1.0);
        let freeze = FreezeMask { trainable: vec![true] };
        let mut st = AdamState::new(&p, &freeze);
        for _ in 0..200 {
            let w = p.get(0).get(0, 0);
            adam_step(&mut p, &scalar(2.0 * w), &mut st, 0.05);
        }
        assert!(p.get(0).get(0, 0).abs() < 0.1, "{}", p.get(0).get(0, 0));
    }

    #[test]
    fn frozen_arrays_have_no_moments() {
        let cfg = ModelConfig { layers: 2, heads: 1, d_model: 4, d_ff: 4, ..ModelConfig::desk() };
        let p = ModelParameters::<f64>::init(&cfg, 3).unwrap();
        let freeze = FreezeMask::finetune(&p);
        let st = AdamState::new(&p, &freeze);
        for (k, t) in freeze.trainable.iter().enumerate() {
            assert_eq!(st.m[k].is_some(), *t);
            assert_eq!(st.v[k].is_some(), *t);
        }
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0, 10), 1e-3);
        assert!((cosine_lr(1e-3, 9, 10) - 1e-5).abs() < 1e-18);
        assert!(cosine_lr(1e-3, 4, 10) < cosine_lr(1e-3, 3, 10));
    }

    #[test]
    fn clipping_rescales_to_unit_norm() {
        let mut g = scalar(3.0);
        let freeze = FreezeMask { trainable: vec![true] };
        assert_eq!(clip_global_norm(&mut g, &freeze, 1.0), 3.0);
        assert_eq!(g.get(0).get(0, 0), 1.0);
        let mut small = scalar(0.5);
        clip_global_norm(&mut small, &freeze, 1.0);
        assert_eq!(small.get(0).get(0, 0), 0.5);
    }

    #[test]
    fn early_stopping_restores_best() {
        let mut es = EarlyStopping::new(1.0, &scalar(0.0));
        assert_eq!(es.observe(1, 0.5, &scalar(1.0)), StopDecision::Improved);
        assert_eq!(es.observe(2, 0.5 - 1e-7, &scalar(2.0)), StopDecision::Wait);
        assert_eq!(es.observe(3, 0.6, &scalar(3.0)), StopDecision::Wait);
        assert_eq!(es.observe(4, 0.7, &scalar(4.0)), StopDecision::Stop);
        assert_eq!(es.best_epoch, 1);
        assert_eq!(es.into_best(), scalar(1.0));
    }
}
