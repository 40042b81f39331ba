use nalgebra::{DMatrix, DVector};

use super::dynamics::electrical_power;
use super::system::PowerSystemSpec;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-10;
const MAX_STEP: f64 = 0.5;

/// Pre-fault operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub delta: Vec<f64>,
    /// Dispatched mechanical power. Machines other than the reference carry
    /// `Pm·load_scale`; the reference picks up the remaining mismatch.
    pub pm: Vec<f64>,
    pub iterations: usize,
}

/// Newton iteration on `Pm·load_scale − P_e(δ) = 0` for every non-reference
/// machine, with `δ_0 = 0`.
pub fn solve_equilibrium(spec: &PowerSystemSpec, load_scale: f64) -> Result<Equilibrium> {
    let n = spec.n_g;
    let y = &spec.y_pre;
    let target: Vec<f64> = spec.pm.iter().map(|p| p * load_scale).collect();
    let mut delta = vec![0.0; n];
    let residual = |delta: &[f64]| -> Vec<f64> {
        let pe = electrical_power(y, &spec.e, delta);
        (1..n).map(|i| target[i] - pe[i]).collect()
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut r = residual(&delta);
    let mut iterations = 0;
    let mut converged_at = None;
    while iterations < MAX_ITERATIONS {
        let err = max_abs(&r);
        if !err.is_finite() {
            break;
        }
        if err < TOLERANCE {
            // A couple of extra Newton steps take the residual to round-off.
            match converged_at {
                None => converged_at = Some(iterations),
                Some(k) if iterations >= k + 2 => break,
                Some(_) => {}
            }
        }
        let m = n - 1;
        if m == 0 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for (ri, i) in (1..n).enumerate() {
            for (ci, k) in (1..n).enumerate() {
                let v = if i == k {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| {
                            let (s, c) = (delta[i] - delta[j]).sin_cos();
                            spec.e[i] * spec.e[j] * (-y.g(i, j) * s + y.b(i, j) * c)
                        })
                        .sum()
                } else {
                    let (s, c) = (delta[i] - delta[k]).sin_cos();
                    spec.e[i] * spec.e[k] * (y.g(i, k) * s - y.b(i, k) * c)
                };
                // Residual is target − P_e, so its Jacobian is −∂P_e/∂δ.
                jac[(ri, ci)] = -v;
            }
        }
        let step = match jac.lu().solve(&DVector::from_vec(r.clone())) {
            Some(s) => s,
            None => break,
        };
        let largest = step.amax();
        let scale = if largest > MAX_STEP { MAX_STEP / largest } else { 1.0 };
        let candidate: Vec<f64> = std::iter::once(0.0).chain((0..m).map(|k| delta[k + 1] - scale * step[k])).collect();
        let r_new = residual(&candidate);
        if converged_at.is_some() && max_abs(&r_new) >= max_abs(&r) {
            break;
        }
        delta = candidate;
        r = r_new;
        iterations += 1;
    }
    if !(max_abs(&r) < TOLERANCE) {
        return Err(Error::InfeasibleDispatch(format!(
            "{} at load scale {load_scale:.3}: residual {:.3e} after {iterations} iterations",
            spec.name,
            max_abs(&r)
        )));
    }
    let pe = electrical_power(y, &spec.e, &delta);
    let mut pm = target;
    pm[0] = pe[0];
    Ok(Equilibrium { delta, pm, iterations })
}
