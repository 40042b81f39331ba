//! Central-difference verification of analytic gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Scalar;
use crate::error::{Error, Result};

/// A collection of flat parameter arrays addressable by index.
pub trait ParamSet<T> {
    fn array_count(&self) -> usize;
    fn array(&self, i: usize) -> &[T];
    fn array_mut(&mut self, i: usize) -> &mut [T];
}

impl<T> ParamSet<T> for Vec<Vec<T>> {
    fn array_count(&self) -> usize {
        self.len()
    }

    fn array(&self, i: usize) -> &[T] {
        &self[i]
    }

    fn array_mut(&mut self, i: usize) -> &mut [T] {
        &mut self[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(array, index)` of the coordinate with the largest error.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f` at `coords`.
///
/// The error per coordinate is `|analytic − fd| / max(1, |fd|)`. `params` is
/// perturbed in place and restored before returning.
pub fn grad_check<T, P, F>(
    mut f: F,
    params: &mut P,
    analytic: &P,
    coords: &[(usize, usize)],
    h: T,
) -> Result<GradCheckReport>
where
    T: Scalar,
    P: ParamSet<T>,
    F: FnMut(&P) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, checked: 0 };
    for &(a, i) in coords {
        let original = params.array(a)[i];
        params.array_mut(a)[i] = original + h;
        let plus = f(params);
        params.array_mut(a)[i] = original - h;
        let minus = f(params);
        params.array_mut(a)[i] = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {plus} / {minus} at array {a}, index {i}")));
        }
        let fd = ((plus - minus) / (h + h)).as_f64();
        let an = analytic.array(a)[i].as_f64();
        let err = (an - fd).abs() / fd.abs().max(1.0);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((a, i));
        }
    }
    Ok(report)
}

/// Picks up to `per_array` distinct coordinates from every array, seeded.
pub fn sample_coordinates<T, P: ParamSet<T>>(params: &P, per_array: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for a in 0..params.array_count() {
        let len = params.array(a).len();
        let mut picked = index::sample(&mut rng, len, per_array.min(len)).into_vec();
        picked.sort_unstable();
        coords.extend(picked.into_iter().map(|i| (a, i)));
    }
    coords
}
