use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

use super::window::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_len: usize,
    pub stride: usize,
}

impl PatchConfig {
    pub fn validate(&self, l_seq: usize) -> Result<()> {
        if self.stride == 0 || self.patch_len == 0 || self.stride > self.patch_len || self.patch_len > l_seq {
            return Err(Error::Config(format!(
                "patch geometry requires 1 <= S <= L_p <= L_seq, got S = {}, L_p = {}, L_seq = {l_seq}",
                self.stride, self.patch_len
            )));
        }
        Ok(())
    }
}

/// `⌊(L_seq − L_p)/S⌋ + 1`.
pub fn patch_count(l_seq: usize, cfg: PatchConfig) -> Result<usize> {
    cfg.validate(l_seq)?;
    Ok((l_seq - cfg.patch_len) / cfg.stride + 1)
}

/// Normalized window split into `P` overlapping patches, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchedSample<T> {
    pub patches: Matrix<T>,
    pub mu: T,
    pub sigma: T,
}

/// Writes the `P × L_p` patch rows of `input` into `out` (row-major).
/// Trailing samples past the last full patch are dropped.
pub fn patch_rows_into<T: Scalar>(input: &[T], cfg: PatchConfig, out: &mut [T]) {
    let p = (input.len() - cfg.patch_len) / cfg.stride + 1;
    debug_assert_eq!(out.len(), p * cfg.patch_len);
    for (r, row) in out.chunks_exact_mut(cfg.patch_len).enumerate() {
        let s = r * cfg.stride;
        row.copy_from_slice(&input[s..s + cfg.patch_len]);
    }
}

pub fn patchify<T: Scalar>(sample: &WindowSample<T>, cfg: PatchConfig) -> Result<PatchedSample<T>> {
    let p = patch_count(sample.input.len(), cfg)?;
    let mut data = vec![T::zero(); p * cfg.patch_len];
    patch_rows_into(&sample.input, cfg, &mut data);
    Ok(PatchedSample { patches: Matrix::from_vec(p, cfg.patch_len, data)?, mu: sample.mu, sigma: sample.sigma })
}
