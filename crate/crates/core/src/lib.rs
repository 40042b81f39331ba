//! Transient-trajectory forecasting for power systems: a swing-equation
//! simulator, a channel-independent patching pipeline, a causal-attention
//! sequence model with freeze-and-finetune training, batched rollout and
//! evaluation metrics.

pub mod datapipe;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod rollout;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Matrix, Scalar};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
