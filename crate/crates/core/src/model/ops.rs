//! Single-sample building blocks and physical-unit prediction helpers.

use super::config::{AttentionMode, ModelConfig};
use super::forward::{block_forward, embed_rows, forward_batch, forward_trace, head_forward, ForwardTrace};
use super::params::{layer_base, slot, ModelParameters};
use crate::datapipe::{denormalize, normalize_input, patch_rows_into, PatchedSample, WindowSample};
use crate::error::{Error, Result};
use crate::numerics::{gemm_nn, Matrix, Scalar, MASK_SENTINEL};

fn check_tokens<T: Scalar>(cfg: &ModelConfig, z: &Matrix<T>) -> Result<()> {
    if z.shape() != (cfg.n_patches(), cfg.d_model) {
        return Err(Error::Shape(format!("token matrix {:?} is not {} x {}", z.shape(), cfg.n_patches(), cfg.d_model)));
    }
    Ok(())
}

/// `z⁰ = x^P W^p + b^p + E_pos`.
pub fn embed<T: Scalar>(
    patched: &PatchedSample<T>,
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
) -> Result<Matrix<T>> {
    if patched.patches.shape() != (cfg.n_patches(), cfg.patch_len) {
        return Err(Error::Shape(format!(
            "patches {:?} are not {} x {}",
            patched.patches.shape(),
            cfg.n_patches(),
            cfg.patch_len
        )));
    }
    Ok(embed_rows(params, cfg.n_patches(), &patched.patches))
}

/// Additive mask: 0 where row ≥ column, the sentinel above the diagonal.
pub fn causal_mask<T: Scalar>(p: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(p, p);
    for r in 0..p {
        for c in r + 1..p {
            m.set(r, c, T::lit(MASK_SENTINEL));
        }
    }
    m
}

/// Multi-head attention of block `layer` including the output projection,
/// together with the per-head attention matrices.
pub fn attention<T: Scalar>(
    z: &Matrix<T>,
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    layer: usize,
    mode: AttentionMode,
) -> Result<(Matrix<T>, Vec<Matrix<T>>)> {
    check_tokens(cfg, z)?;
    let p = cfg.n_patches();
    let d = cfg.d_model;
    let dk = cfg.d_head();
    let base = layer_base(layer);
    let proj = |s: usize| z.matmul(params.get(base + s));
    let (q, k, v) = (proj(slot::WQ)?, proj(slot::WK)?, proj(slot::WV)?);
    let mask = match mode {
        AttentionMode::Causal => causal_mask(p),
        AttentionMode::Bidirectional => Matrix::zeros(p, p),
    };
    let scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let mut ctx = Matrix::zeros(p, d);
    let mut maps = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let pick = |m: &Matrix<T>| {
            let rows: Vec<Vec<T>> = (0..p).map(|r| m.row(r)[h * dk..(h + 1) * dk].to_vec()).collect();
            Matrix::from_rows(&rows)
        };
        let (qh, kh, vh) = (pick(&q)?, pick(&k)?, pick(&v)?);
        let scores = qh.matmul(&kh.transpose())?.scale(scale).add(&mask)?;
        let a = crate::numerics::softmax_rows(&scores);
        let oh = a.matmul(&vh)?;
        for r in 0..p {
            ctx.row_mut(r)[h * dk..(h + 1) * dk].copy_from_slice(oh.row(r));
        }
        maps.push(a);
    }
    let mut out = Matrix::zeros(p, d);
    gemm_nn(&ctx, params.get(base + slot::WO), &mut out);
    Ok((out, maps))
}

/// One post-norm block: `LN(MHA(z)+z)` followed by `LN(FFN(h)+h)`.
pub fn transformer_block<T: Scalar>(
    z: &Matrix<T>,
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    layer: usize,
    mode: AttentionMode,
) -> Result<Matrix<T>> {
    check_tokens(cfg, z)?;
    Ok(block_forward(params, cfg, layer, mode, z, false).0)
}

/// Flattens `z^L`, applies the output head and maps back to physical units.
pub fn project<T: Scalar>(
    z_last: &Matrix<T>,
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    mu: T,
    sigma: T,
) -> Result<Vec<T>> {
    check_tokens(cfg, z_last)?;
    let y = head_forward(params, cfg, z_last);
    Ok(denormalize(y.data(), mu, sigma))
}

fn patch_matrix<T: Scalar>(cfg: &ModelConfig, inputs: &[&[T]]) -> Result<Matrix<T>> {
    let (p, lp) = (cfg.n_patches(), cfg.patch_len);
    let mut data = vec![T::zero(); inputs.len() * p * lp];
    for (x, out) in inputs.iter().zip(data.chunks_exact_mut(p * lp)) {
        if x.len() != cfg.l_seq {
            return Err(Error::Shape(format!("window of length {} but L_seq = {}", x.len(), cfg.l_seq)));
        }
        patch_rows_into(x, cfg.patch_config(), out);
    }
    Matrix::from_vec(inputs.len() * p, lp, data)
}

/// Physical-unit prediction for an already-normalized window.
pub fn forward<T: Scalar>(sample: &WindowSample<T>, params: &ModelParameters<T>, cfg: &ModelConfig) -> Result<Vec<T>> {
    let patches = patch_matrix(cfg, &[&sample.input])?;
    let y = forward_batch(params, cfg, &patches)?;
    Ok(denormalize(y.data(), sample.mu, sample.sigma))
}

/// Like [`forward`], also returning hidden states and attention maps.
pub fn forward_with_trace<T: Scalar>(
    sample: &WindowSample<T>,
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
) -> Result<(Vec<T>, ForwardTrace<T>)> {
    let patches = patch_matrix(cfg, &[&sample.input])?;
    let (y, trace) = forward_trace(params, cfg, &patches)?;
    Ok((denormalize(&y, sample.mu, sample.sigma), trace))
}

/// Normalized and patched batch built from raw physical windows, with the
/// per-window `(μ, σ)`.
pub fn prepare_batch<T: Scalar>(cfg: &ModelConfig, raw_inputs: &[&[T]]) -> Result<(Matrix<T>, Vec<(T, T)>)> {
    let mut normalized = Vec::with_capacity(raw_inputs.len());
    let mut stats = Vec::with_capacity(raw_inputs.len());
    for x in raw_inputs {
        let (z, mu, sigma) = normalize_input(x);
        normalized.push(z);
        stats.push((mu, sigma));
    }
    let refs: Vec<&[T]> = normalized.iter().map(Vec::as_slice).collect();
    Ok((patch_matrix(cfg, &refs)?, stats))
}

/// Physical-unit predictions for raw windows, one `L_pred` row each.
pub fn predict_raw<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    raw_inputs: &[&[T]],
) -> Result<Vec<Vec<T>>> {
    if raw_inputs.is_empty() {
        return Ok(Vec::new());
    }
    let (patches, stats) = prepare_batch(cfg, raw_inputs)?;
    let y = forward_batch(params, cfg, &patches)?;
    Ok(stats.iter().enumerate().map(|(b, &(mu, sigma))| denormalize(y.row(b), mu, sigma)).collect())
}
