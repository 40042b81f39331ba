//! Representation diagnostics: cross-layer feature stability, co-direction
//! of final-layer tokens, and the self/cross alignment terms bounding the
//! attention gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardTrace;
use crate::numerics::{Matrix, Scalar};

pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOL: f64 = 1e-10;
pub const CO_DIRECTION_THRESHOLD: f64 = 0.8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_f64<T: Scalar>(row: &[T]) -> Vec<f64> {
    row.iter().map(|v| v.as_f64()).collect()
}

/// Cosine similarity, `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStability {
    /// Mean over patch positions of `cos(z^{L−1}_p, z^L_p)`.
    pub mean: f64,
    /// Positions skipped because a row had zero norm.
    pub skipped: usize,
}

pub fn feature_stability<T: Scalar>(trace: &ForwardTrace<T>) -> Result<FeatureStability> {
    let n = trace.hidden.len();
    if n < 2 {
        return Err(Error::Validation("trace holds fewer than two hidden states".into()));
    }
    let (prev, last) = (&trace.hidden[n - 2], &trace.hidden[n - 1]);
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for p in 0..last.rows() {
        match cosine(&to_f64(prev.row(p)), &to_f64(last.row(p))) {
            Some(c) => {
                sum += c;
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::Validation("every patch position has a zero-norm row".into()));
    }
    Ok(FeatureStability { mean: sum / used as f64, skipped })
}

/// Fraction of unordered distinct pairs of final-layer rows whose cosine
/// exceeds `threshold`. Pairs involving a zero row never qualify.
pub fn co_direction_ratio<T: Scalar>(trace: &ForwardTrace<T>, threshold: f64) -> Result<f64> {
    let last = trace.hidden.last().ok_or_else(|| Error::Validation("empty trace".into()))?;
    let p = last.rows();
    if p < 2 {
        return Err(Error::Validation(format!("co-direction ratio needs at least two patches, got {p}")));
    }
    let rows: Vec<Vec<f64>> = (0..p).map(|r| to_f64(last.row(r))).collect();
    let mut hits = 0usize;
    for i in 0..p {
        for j in i + 1..p {
            if cosine(&rows[i], &rows[j]).is_some_and(|c| c > threshold) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (p * (p - 1) / 2) as f64)
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &Matrix<f64>) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    // A slightly tilted start avoids exact orthogonality to the top vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * i as f64).collect();
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let av: Vec<f64> = (0..a.rows()).map(|r| dot(a.row(r), &v)).collect();
        let mut w = vec![0.0; n];
        for (r, &s) in av.iter().enumerate() {
            for (wi, &arc) in w.iter_mut().zip(a.row(r)) {
                *wi += arc * s;
            }
        }
        let wn = dot(&w, &w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        let next = wn.sqrt();
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        let done = (next - sigma).abs() <= POWER_TOL * next.max(1.0);
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTerms {
    /// `(a_ii + ½)·‖x_i − Σ_j a_ij x_j‖²` per token.
    pub self_terms: Vec<f64>,
    /// `a_ij·‖x_j − Σ_k a_ik x_k‖²` for `i ≠ j`; zero on the diagonal.
    pub cross_terms: Matrix<f64>,
    pub spectral_norm: f64,
    /// `‖A‖₂·(Σ self + Σ cross + ½ Σ_i ‖x_i‖²)`.
    pub bound: f64,
}

impl AlignmentTerms {
    pub fn self_sum(&self) -> f64 {
        self.self_terms.iter().sum()
    }

    pub fn cross_sum(&self) -> f64 {
        self.cross_terms.data().iter().sum()
    }
}

/// Row-stochastic check with tolerance `1e-9` on each row sum.
pub fn check_row_stochastic(a: &Matrix<f64>) -> Result<()> {
    for r in 0..a.rows() {
        let row = a.row(r);
        if row.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Validation(format!("attention row {r} has a negative or non-finite entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("attention row {r} sums to {s}")));
        }
    }
    Ok(())
}

pub fn alignment_terms(a: &Matrix<f64>, x: &Matrix<f64>) -> Result<AlignmentTerms> {
    let p = a.rows();
    if a.cols() != p || x.rows() != p {
        return Err(Error::Shape(format!("attention {:?} against tokens {:?}", a.shape(), x.shape())));
    }
    check_row_stochastic(a)?;
    // Context offsets relative to the query token, r_i = Σ_k a_ik (x_k − x_i),
    // so identical tokens give exact zeros regardless of row-sum rounding.
    let d = x.cols();
    let mut offsets = Matrix::<f64>::zeros(p, d);
    for i in 0..p {
        for k in 0..p {
            let w = a.get(i, k);
            for c in 0..d {
                let v = offsets.get(i, c) + w * (x.get(k, c) - x.get(i, c));
                offsets.set(i, c, v);
            }
        }
    }
    // ‖x_j − Σ_k a_ik x_k‖² = ‖(x_j − x_i) − r_i‖².
    let dist = |j: usize, i: usize| -> f64 {
        (0..d)
            .map(|c| {
                let e = (x.get(j, c) - x.get(i, c)) - offsets.get(i, c);
                e * e
            })
            .sum()
    };
    let self_terms: Vec<f64> = (0..p).map(|i| (a.get(i, i) + 0.5) * dist(i, i)).collect();
    let mut cross_terms = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i != j {
                cross_terms.set(i, j, a.get(i, j) * dist(j, i));
            }
        }
    }
    let sq_norms: f64 = (0..p).map(|i| dot(x.row(i), x.row(i))).sum();
    let sn = spectral_norm(a);
    let mut t = AlignmentTerms { self_terms, cross_terms, spectral_norm: sn, bound: 0.0 };
    t.bound = sn * (t.self_sum() + t.cross_sum() + 0.5 * sq_norms);
    Ok(t)
}
