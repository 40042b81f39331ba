//! Dense linear algebra, activations, and gradient verification.

mod gradcheck;
mod matrix;
mod ops;
mod scalar;

pub use gradcheck::{grad_check, sample_coordinates, GradCheckReport, ParamSet};
pub use matrix::Matrix;
pub(crate) use matrix::{gemm_nn, gemm_nt, gemm_nt_acc, gemm_tn_acc};
pub use ops::{gelu, gelu_grad_scalar, gelu_scalar, layer_norm, softmax_rows, MASK_SENTINEL};
pub(crate) use ops::{layer_norm_into, softmax_in_place};
pub use scalar::Scalar;
