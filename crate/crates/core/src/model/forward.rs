//! Batched forward pass and its hand-written reverse pass.
//!
//! A batch of `B` samples is a `(B·P) × L_p` patch matrix whose rows
//! `b·P .. (b+1)·P` belong to sample `b`. Every kernel works row by row with
//! a fixed summation order, so a sample's output does not depend on what
//! else is in the batch.

use super::config::{AttentionMode, ModelConfig};
use super::params::{head_b, head_w, layer_base, slot, ModelParameters, EMBED_B, EMBED_POS, EMBED_W};
use super::FreezeMask;
use crate::error::{Error, Result};
use crate::numerics::{
    gelu_grad_scalar, gelu_scalar, gemm_nn, gemm_nt, gemm_nt_acc, gemm_tn_acc, layer_norm_into, softmax_in_place,
    Matrix, Scalar, MASK_SENTINEL,
};

/// Intermediate values of one block kept for the reverse pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    input: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    /// Attention probabilities, indexed `((b·h + head)·P + i)·P + j`.
    attn: Vec<T>,
    ctx: Matrix<T>,
    xhat1: Matrix<T>,
    rstd1: Vec<T>,
    h1: Matrix<T>,
    f1: Matrix<T>,
    g: Matrix<T>,
    xhat2: Matrix<T>,
    rstd2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    patches: Matrix<T>,
    layers: Vec<LayerCache<T>>,
    output: Matrix<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Final hidden states `z^L`, `(B·P) × d`.
    pub fn final_hidden(&self) -> &Matrix<T> {
        &self.output
    }
}

/// Per-sample hidden states `z^0..z^L` and per-layer, per-head attention
/// matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub hidden: Vec<Matrix<T>>,
    pub attention: Vec<Vec<Matrix<T>>>,
}

fn check_batch<T: Scalar>(cfg: &ModelConfig, patches: &Matrix<T>) -> Result<usize> {
    let p = cfg.n_patches();
    if patches.cols() != cfg.patch_len || patches.rows() % p != 0 {
        return Err(Error::Shape(format!("patch matrix {:?} is not (B·{p}) x {}", patches.shape(), cfg.patch_len)));
    }
    Ok(patches.rows() / p)
}

pub(crate) fn embed_rows<T: Scalar>(params: &ModelParameters<T>, p: usize, patches: &Matrix<T>) -> Matrix<T> {
    let w = params.get(EMBED_W);
    let mut z = Matrix::zeros(patches.rows(), w.cols());
    gemm_nn(patches, w, &mut z);
    let bias = params.get(EMBED_B).row(0);
    let pos = params.get(EMBED_POS);
    for r in 0..z.rows() {
        let pos_row = pos.row(r % p);
        for ((x, &b), &e) in z.row_mut(r).iter_mut().zip(bias).zip(pos_row) {
            *x = *x + b + e;
        }
    }
    z
}

fn gather_head<T: Scalar>(src: &Matrix<T>, b: usize, h: usize, dst: &mut Matrix<T>) {
    let (p, dk) = dst.shape();
    for i in 0..p {
        dst.row_mut(i).copy_from_slice(&src.row(b * p + i)[h * dk..(h + 1) * dk]);
    }
}

fn scatter_head<T: Scalar>(src: &Matrix<T>, b: usize, h: usize, dst: &mut Matrix<T>) {
    let (p, dk) = src.shape();
    for i in 0..p {
        dst.row_mut(b * p + i)[h * dk..(h + 1) * dk].copy_from_slice(src.row(i));
    }
}

fn attention_core<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    p: usize,
    heads: usize,
    mode: AttentionMode,
    attn: &mut [T],
    ctx: &mut Matrix<T>,
) {
    let d = q.cols();
    let dk = d / heads;
    let batch = q.rows() / p;
    let scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let (mut qh, mut kh, mut vh, mut oh) =
        (Matrix::zeros(p, dk), Matrix::zeros(p, dk), Matrix::zeros(p, dk), Matrix::zeros(p, dk));
    let mut scores = Matrix::zeros(p, p);
    for b in 0..batch {
        for h in 0..heads {
            gather_head(q, b, h, &mut qh);
            gather_head(k, b, h, &mut kh);
            gather_head(v, b, h, &mut vh);
            gemm_nt(&qh, &kh, &mut scores);
            for i in 0..p {
                let row = scores.row_mut(i);
                for (j, s) in row.iter_mut().enumerate() {
                    *s = if mode == AttentionMode::Causal && j > i { T::lit(MASK_SENTINEL) } else { *s * scale };
                }
                softmax_in_place(row);
            }
            let base = (b * heads + h) * p * p;
            attn[base..base + p * p].copy_from_slice(scores.data());
            gemm_nn(&scores, &vh, &mut oh);
            scatter_head(&oh, b, h, ctx);
        }
    }
}

/// Layer norm over rows; returns normalized rows and `1/σ` per row.
fn layer_norm_rows<T: Scalar>(
    x: &Matrix<T>,
    gain: &[T],
    bias: &[T],
    eps: T,
    out: &mut Matrix<T>,
    xhat: &mut Matrix<T>,
) -> Vec<T> {
    let mut rstds = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let (mean, rstd) = layer_norm_into(x.row(r), gain, bias, eps, out.row_mut(r));
        for (h, &v) in xhat.row_mut(r).iter_mut().zip(x.row(r)) {
            *h = (v - mean) * rstd;
        }
        rstds.push(rstd);
    }
    rstds
}

fn add_bias_rows<T: Scalar>(m: &mut Matrix<T>, bias: &[T]) {
    for r in 0..m.rows() {
        for (x, &b) in m.row_mut(r).iter_mut().zip(bias) {
            *x += b;
        }
    }
}

/// One post-norm block. Returns the output and, when requested, the cache.
pub(crate) fn block_forward<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    layer: usize,
    mode: AttentionMode,
    z: &Matrix<T>,
    keep: bool,
) -> (Matrix<T>, LayerCache<T>) {
    let base = layer_base(layer);
    let w = |s: usize| params.get(base + s);
    let (n, d, p) = (z.rows(), cfg.d_model, cfg.n_patches());
    let eps = T::lit(cfg.ln_eps);

    let mut q = Matrix::zeros(n, d);
    let mut k = Matrix::zeros(n, d);
    let mut v = Matrix::zeros(n, d);
    gemm_nn(z, w(slot::WQ), &mut q);
    gemm_nn(z, w(slot::WK), &mut k);
    gemm_nn(z, w(slot::WV), &mut v);
    let mut attn = vec![T::zero(); (n / p) * cfg.heads * p * p];
    let mut ctx = Matrix::zeros(n, d);
    attention_core(&q, &k, &v, p, cfg.heads, mode, &mut attn, &mut ctx);

    let mut r1 = Matrix::zeros(n, d);
    gemm_nn(&ctx, w(slot::WO), &mut r1);
    for (x, &zi) in r1.data_mut().iter_mut().zip(z.data()) {
        *x += zi;
    }
    let mut h1 = Matrix::zeros(n, d);
    let mut xhat1 = Matrix::zeros(n, d);
    let rstd1 = layer_norm_rows(&r1, w(slot::LN1_G).row(0), w(slot::LN1_B).row(0), eps, &mut h1, &mut xhat1);

    let mut f1 = Matrix::zeros(n, cfg.d_ff);
    gemm_nn(&h1, w(slot::W1), &mut f1);
    add_bias_rows(&mut f1, w(slot::B1).row(0));
    let g = f1.map(gelu_scalar);
    let mut r2 = Matrix::zeros(n, d);
    gemm_nn(&g, w(slot::W2), &mut r2);
    add_bias_rows(&mut r2, w(slot::B2).row(0));
    for (x, &hi) in r2.data_mut().iter_mut().zip(h1.data()) {
        *x += hi;
    }
    let mut out = Matrix::zeros(n, d);
    let mut xhat2 = Matrix::zeros(n, d);
    let rstd2 = layer_norm_rows(&r2, w(slot::LN2_G).row(0), w(slot::LN2_B).row(0), eps, &mut out, &mut xhat2);

    let cache = if keep {
        LayerCache { input: z.clone(), q, k, v, attn, ctx, xhat1, rstd1, h1, f1, g, xhat2, rstd2 }
    } else {
        LayerCache {
            input: Matrix::zeros(0, 0),
            q: Matrix::zeros(0, 0),
            k: Matrix::zeros(0, 0),
            v: Matrix::zeros(0, 0),
            attn,
            ctx: Matrix::zeros(0, 0),
            xhat1: Matrix::zeros(0, 0),
            rstd1: Vec::new(),
            h1: Matrix::zeros(0, 0),
            f1: Matrix::zeros(0, 0),
            g: Matrix::zeros(0, 0),
            xhat2: Matrix::zeros(0, 0),
            rstd2: Vec::new(),
        }
    };
    (out, cache)
}

/// Flatten-and-project head on normalized scale: `B × L_pred`.
pub(crate) fn head_forward<T: Scalar>(params: &ModelParameters<T>, cfg: &ModelConfig, z: &Matrix<T>) -> Matrix<T> {
    let batch = z.rows() / cfg.n_patches();
    let flat = Matrix::from_vec(batch, cfg.n_patches() * cfg.d_model, z.data().to_vec()).expect("flatten shape");
    let mut y = Matrix::zeros(batch, cfg.l_pred);
    gemm_nn(&flat, params.get(head_w(cfg.layers)), &mut y);
    add_bias_rows(&mut y, params.get(head_b(cfg.layers)).row(0));
    y
}

fn run<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    patches: &Matrix<T>,
    keep: bool,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    let batch = check_batch(cfg, patches)?;
    let mut z = embed_rows(params, cfg.n_patches(), patches);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let (next, cache) = block_forward(params, cfg, l, cfg.attention, &z, keep);
        layers.push(cache);
        z = next;
    }
    let y = head_forward(params, cfg, &z);
    Ok((
        y,
        ForwardCache { batch, patches: if keep { patches.clone() } else { Matrix::zeros(0, 0) }, layers, output: z },
    ))
}

/// Normalized-scale predictions `B × L_pred` for a batch of patch matrices.
pub fn forward_batch<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    patches: &Matrix<T>,
) -> Result<Matrix<T>> {
    run(params, cfg, patches, false).map(|(y, _)| y)
}

/// Forward pass that keeps everything the reverse pass needs.
pub fn forward_train<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    patches: &Matrix<T>,
) -> Result<(Matrix<T>, ForwardCache<T>)> {
    run(params, cfg, patches, true)
}

/// Single-sample forward returning hidden states and attention maps.
pub fn forward_trace<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    patches: &Matrix<T>,
) -> Result<(Vec<T>, ForwardTrace<T>)> {
    let batch = check_batch(cfg, patches)?;
    if batch != 1 {
        return Err(Error::Shape(format!("trace needs a single sample, got {batch}")));
    }
    let p = cfg.n_patches();
    let mut z = embed_rows(params, p, patches);
    let mut hidden = vec![z.clone()];
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let (next, cache) = block_forward(params, cfg, l, cfg.attention, &z, false);
        attention.push(
            cache
                .attn
                .chunks_exact(p * p)
                .map(|a| Matrix::from_vec(p, p, a.to_vec()).expect("attention shape"))
                .collect(),
        );
        hidden.push(next.clone());
        z = next;
    }
    let y = head_forward(params, cfg, &z);
    Ok((y.into_vec(), ForwardTrace { hidden, attention }))
}

fn col_sum_acc<T: Scalar>(m: &Matrix<T>, out: &mut [T]) {
    for r in 0..m.rows() {
        for (o, &x) in out.iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
}

/// Reverse pass of a row-wise layer norm. Accumulates gain/bias gradients
/// when `param_grads` is given and returns the input gradient.
fn layer_norm_backward<T: Scalar>(
    dy: &Matrix<T>,
    xhat: &Matrix<T>,
    rstd: &[T],
    gain: &[T],
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Matrix<T> {
    let (n, d) = dy.shape();
    if let Some((dg, db)) = param_grads {
        for r in 0..n {
            for (c, (&g, &h)) in dy.row(r).iter().zip(xhat.row(r)).enumerate() {
                dg[c] += g * h;
                db[c] += g;
            }
        }
    }
    let inv_d = T::one() / T::from_usize(d).unwrap();
    let mut dx = Matrix::zeros(n, d);
    let mut dxhat = vec![T::zero(); d];
    for r in 0..n {
        for ((o, &g), &gy) in dxhat.iter_mut().zip(gain).zip(dy.row(r)) {
            *o = gy * g;
        }
        let mean_d = dxhat.iter().copied().sum::<T>() * inv_d;
        let mean_dh = dxhat.iter().zip(xhat.row(r)).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
        for ((o, &a), &h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
            *o = rstd[r] * (a - mean_d - h * mean_dh);
        }
    }
    dx
}

fn block_backward<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    layer: usize,
    cache: &LayerCache<T>,
    dz_out: &Matrix<T>,
    freeze: &FreezeMask,
    grads: &mut ModelParameters<T>,
) -> Matrix<T> {
    let base = layer_base(layer);
    let w = |s: usize| params.get(base + s);
    let train = |s: usize| freeze.is_trainable(base + s);
    let (n, d, p, heads) = (dz_out.rows(), cfg.d_model, cfg.n_patches(), cfg.heads);
    let dk = d / heads;

    // Second layer norm.
    let dr2 = {
        let pg = if train(slot::LN2_G) || train(slot::LN2_B) {
            let (lo, hi) = grads.arrays.split_at_mut(base + slot::LN2_B);
            Some((lo[base + slot::LN2_G].value.data_mut(), hi[0].value.data_mut()))
        } else {
            None
        };
        let dx = layer_norm_backward(dz_out, &cache.xhat2, &cache.rstd2, w(slot::LN2_G).row(0), pg);
        if !train(slot::LN2_G) {
            grads.get_mut(base + slot::LN2_G).data_mut().fill(T::zero());
        }
        if !train(slot::LN2_B) {
            grads.get_mut(base + slot::LN2_B).data_mut().fill(T::zero());
        }
        dx
    };

    // Feed-forward network with residual.
    if train(slot::W2) {
        gemm_tn_acc(&cache.g, &dr2, grads.get_mut(base + slot::W2));
    }
    if train(slot::B2) {
        col_sum_acc(&dr2, grads.get_mut(base + slot::B2).data_mut());
    }
    let mut df1 = Matrix::zeros(n, cfg.d_ff);
    gemm_nt(&dr2, w(slot::W2), &mut df1);
    for (g, &f) in df1.data_mut().iter_mut().zip(cache.f1.data()) {
        *g *= gelu_grad_scalar(f);
    }
    if train(slot::W1) {
        gemm_tn_acc(&cache.h1, &df1, grads.get_mut(base + slot::W1));
    }
    if train(slot::B1) {
        col_sum_acc(&df1, grads.get_mut(base + slot::B1).data_mut());
    }
    let mut dh1 = dr2;
    gemm_nt_acc(&df1, w(slot::W1), &mut dh1);

    // First layer norm.
    let dr1 = {
        let pg = if train(slot::LN1_G) || train(slot::LN1_B) {
            let (lo, hi) = grads.arrays.split_at_mut(base + slot::LN1_B);
            Some((lo[base + slot::LN1_G].value.data_mut(), hi[0].value.data_mut()))
        } else {
            None
        };
        let dx = layer_norm_backward(&dh1, &cache.xhat1, &cache.rstd1, w(slot::LN1_G).row(0), pg);
        if !train(slot::LN1_G) {
            grads.get_mut(base + slot::LN1_G).data_mut().fill(T::zero());
        }
        if !train(slot::LN1_B) {
            grads.get_mut(base + slot::LN1_B).data_mut().fill(T::zero());
        }
        dx
    };

    // Attention output projection.
    if train(slot::WO) {
        gemm_tn_acc(&cache.ctx, &dr1, grads.get_mut(base + slot::WO));
    }
    let mut dctx = Matrix::zeros(n, d);
    gemm_nt(&dr1, w(slot::WO), &mut dctx);

    // Scaled dot-product attention.
    let mut dq = Matrix::zeros(n, d);
    let mut dkm = Matrix::zeros(n, d);
    let mut dv = Matrix::zeros(n, d);
    let scale = T::one() / T::from_usize(dk).unwrap().sqrt();
    let mut am = Matrix::zeros(p, p);
    let mut ds = Matrix::zeros(p, p);
    let (mut qh, mut kh, mut vh, mut dch) =
        (Matrix::zeros(p, dk), Matrix::zeros(p, dk), Matrix::zeros(p, dk), Matrix::zeros(p, dk));
    let mut gh = Matrix::zeros(p, dk);
    for b in 0..n / p {
        for h in 0..heads {
            let base_a = (b * heads + h) * p * p;
            am.data_mut().copy_from_slice(&cache.attn[base_a..base_a + p * p]);
            gather_head(&cache.q, b, h, &mut qh);
            gather_head(&cache.k, b, h, &mut kh);
            gather_head(&cache.v, b, h, &mut vh);
            gather_head(&dctx, b, h, &mut dch);
            // dA = dC·Vᵀ, then the softmax Jacobian row by row.
            gemm_nt(&dch, &vh, &mut ds);
            for i in 0..p {
                let a = am.row(i);
                let da = ds.row_mut(i);
                let dot = a.iter().zip(da.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                for (g, &aij) in da.iter_mut().zip(a) {
                    *g = aij * (*g - dot) * scale;
                }
            }
            gh.data_mut().fill(T::zero());
            gemm_tn_acc(&am, &dch, &mut gh);
            scatter_head(&gh, b, h, &mut dv);
            gemm_nn(&ds, &kh, &mut gh);
            scatter_head(&gh, b, h, &mut dq);
            gh.data_mut().fill(T::zero());
            gemm_tn_acc(&ds, &qh, &mut gh);
            scatter_head(&gh, b, h, &mut dkm);
        }
    }
    for (s, dm) in [(slot::WQ, &dq), (slot::WK, &dkm), (slot::WV, &dv)] {
        if train(s) {
            gemm_tn_acc(&cache.input, dm, grads.get_mut(base + s));
        }
    }
    let mut dz = dr1;
    gemm_nt_acc(&dq, w(slot::WQ), &mut dz);
    gemm_nt_acc(&dkm, w(slot::WK), &mut dz);
    gemm_nt_acc(&dv, w(slot::WV), &mut dz);
    dz
}

/// Accumulates `∂loss/∂θ` into `grads` given `d_out = ∂loss/∂y` for the
/// normalized outputs. Frozen arrays receive no contribution.
pub fn backward<T: Scalar>(
    params: &ModelParameters<T>,
    cfg: &ModelConfig,
    cache: &ForwardCache<T>,
    d_out: &Matrix<T>,
    freeze: &FreezeMask,
    grads: &mut ModelParameters<T>,
) -> Result<()> {
    if d_out.shape() != (cache.batch, cfg.l_pred) || cache.patches.rows() == 0 && cache.batch > 0 {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match a training cache of batch {}",
            d_out.shape(),
            cache.batch
        )));
    }
    let (p, d) = (cfg.n_patches(), cfg.d_model);
    let hw = head_w(cfg.layers);
    let hb = head_b(cfg.layers);
    let flat = Matrix::from_vec(cache.batch, p * d, cache.output.data().to_vec())?;
    if freeze.is_trainable(hw) {
        gemm_tn_acc(&flat, d_out, grads.get_mut(hw));
    }
    if freeze.is_trainable(hb) {
        col_sum_acc(d_out, grads.get_mut(hb).data_mut());
    }
    let mut dflat = Matrix::zeros(cache.batch, p * d);
    gemm_nt(d_out, params.get(hw), &mut dflat);
    let mut dz = Matrix::from_vec(cache.batch * p, d, dflat.into_vec())?;

    for l in (0..cfg.layers).rev() {
        dz = block_backward(params, cfg, l, &cache.layers[l], &dz, freeze, grads);
    }

    if freeze.is_trainable(EMBED_W) {
        gemm_tn_acc(&cache.patches, &dz, grads.get_mut(EMBED_W));
    }
    if freeze.is_trainable(EMBED_B) {
        col_sum_acc(&dz, grads.get_mut(EMBED_B).data_mut());
    }
    if freeze.is_trainable(EMBED_POS) {
        let pos = grads.get_mut(EMBED_POS);
        for r in 0..dz.rows() {
            for (o, &g) in pos.row_mut(r % p).iter_mut().zip(dz.row(r)) {
                *o += g;
            }
        }
    }
    Ok(())
}
