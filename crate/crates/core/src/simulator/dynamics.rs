//! Classical swing model: electrical power, state derivatives, and the
//! transient energy function.

use super::system::{Admittance, PowerSystemSpec};

/// `P_e,i = Σ_j E_i E_j (G_ij cos(δ_i − δ_j) + B_ij sin(δ_i − δ_j))`.
pub fn electrical_power(y: &Admittance, e: &[f64], delta: &[f64]) -> Vec<f64> {
    let n = y.size();
    assert_eq!(e.len(), n, "voltage vector length");
    assert_eq!(delta.len(), n, "angle vector length");
    let mut pe = vec![0.0; n];
    electrical_power_into(y, e, delta, &mut pe);
    pe
}

pub(crate) fn electrical_power_into(y: &Admittance, e: &[f64], delta: &[f64], pe: &mut [f64]) {
    let n = y.size();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            let (s, c) = (delta[i] - delta[j]).sin_cos();
            acc += e[i] * e[j] * (y.g(i, j) * c + y.b(i, j) * s);
        }
        pe[i] = acc;
    }
}

/// State layout is `[δ_1..δ_n, Δω_1..Δω_n]`. `pm` is the dispatched
/// mechanical power (already load-scaled and rebalanced).
pub fn swing_derivatives(spec: &PowerSystemSpec, y: &Admittance, pm: &[f64], state: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; state.len()];
    let mut pe = vec![0.0; spec.n_g];
    swing_derivatives_into(spec, y, pm, state, &mut pe, &mut out);
    out
}

pub(crate) fn swing_derivatives_into(
    spec: &PowerSystemSpec,
    y: &Admittance,
    pm: &[f64],
    state: &[f64],
    pe: &mut [f64],
    out: &mut [f64],
) {
    let n = spec.n_g;
    assert_eq!(state.len(), 2 * n, "state has 2·n_g entries");
    let (delta, domega) = state.split_at(n);
    electrical_power_into(y, &spec.e, delta, pe);
    for i in 0..n {
        out[i] = spec.omega_s * domega[i];
        out[n + i] = (pm[i] - pe[i] - spec.d[i] * domega[i]) / (2.0 * spec.h[i]);
    }
}

/// Conserved energy of the undamped model when `y` has no off-diagonal
/// conductance: `ω_s Σ H_i Δω_i² − Σ (Pm_i − E_i² G_ii) δ_i − Σ_{i<j} E_i E_j B_ij cos(δ_i − δ_j)`.
pub fn transient_energy(spec: &PowerSystemSpec, y: &Admittance, pm: &[f64], state: &[f64]) -> f64 {
    let n = spec.n_g;
    let (delta, domega) = state.split_at(n);
    let kinetic: f64 = (0..n).map(|i| spec.omega_s * spec.h[i] * domega[i] * domega[i]).sum();
    let mut potential = 0.0;
    for i in 0..n {
        potential -= (pm[i] - spec.e[i] * spec.e[i] * y.g(i, i)) * delta[i];
        for j in i + 1..n {
            potential -= spec.e[i] * spec.e[j] * y.b(i, j) * (delta[i] - delta[j]).cos();
        }
    }
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::builtin;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn two_machine_b(b: f64) -> Admittance {
        let mut y = Admittance::zeros(2);
        y.set(0, 1, Complex64::new(0.0, b));
        y.set(1, 0, Complex64::new(0.0, b));
        y
    }

    #[test]
    fn quarter_turn_gives_unit_power() {
        let pe = electrical_power(&two_machine_b(1.0), &[1.0, 1.0], &[FRAC_PI_2, 0.0]);
        assert!((pe[0] - 1.0).abs() < 1e-15);
        assert!((pe[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_angles_lossless_give_zero() {
        let spec = builtin::three_machine();
        let y = spec.y_pre.lossless_transfer();
        let mut y0 = y.clone();
        for i in 0..3 {
            y0.set(i, i, Complex64::new(0.0, y.b(i, i)));
        }
        let pe = electrical_power(&y0, &spec.e, &[0.3, 0.3, 0.3]);
        assert!(pe.iter().all(|p| p.abs() < 1e-15));
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 3;
        let mut y = Admittance::zeros(n);
        let mut entries = vec![[0.0; 2]; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = [rng.random_range(-1.0..1.0), rng.random_range(-5.0..5.0)];
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                y.set(i, j, Complex64::new(entries[i * n + j][0], entries[i * n + j][1]));
            }
        }
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.9..1.1)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pe = electrical_power(&y, &e, &d);
        for i in 0..n {
            let mut oracle = 0.0;
            for j in 0..n {
                let [g, b] = entries[i * n + j];
                oracle += e[i] * e[j] * g * (d[i] - d[j]).cos();
                oracle += e[i] * e[j] * b * (d[i] - d[j]).sin();
            }
            assert!((pe[i] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_vanishes_at_fixed_point() {
        let spec = builtin::three_machine();
        let delta = [0.0, 0.2, 0.1];
        let pm = electrical_power(&spec.y_pre, &spec.e, &delta);
        let state = [delta.as_slice(), &[0.0; 3]].concat();
        let dx = swing_derivatives(&spec, &spec.y_pre, &pm, &state);
        assert!(dx.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn undamped_balanced_speeds_decouple() {
        let mut spec = builtin::three_machine();
        spec.d = vec![0.0; 3];
        let delta = [0.0, 0.2, 0.1];
        let pm = electrical_power(&spec.y_pre, &spec.e, &delta);
        let state = [delta.as_slice(), &[0.01; 3]].concat();
        let dx = swing_derivatives(&spec, &spec.y_pre, &pm, &state);
        for i in 0..3 {
            assert!((dx[i] - spec.omega_s * 0.01).abs() < 1e-12);
            assert!(dx[3 + i].abs() < 1e-15);
        }
    }

    #[test]
    fn random_state_matches_hand_formula() {
        let spec = builtin::three_machine();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state: Vec<f64> = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
        let pm = vec![0.4, 1.5, 0.9];
        let dx = swing_derivatives(&spec, &spec.y_pre, &pm, &state);
        for i in 0..3 {
            let mut pe = 0.0;
            for j in 0..3 {
                let a = state[i] - state[j];
                pe += spec.e[i] * spec.e[j] * (spec.y_pre.g(i, j) * a.cos() + spec.y_pre.b(i, j) * a.sin());
            }
            let expect = (pm[i] - pe - spec.d[i] * state[3 + i]) / (2.0 * spec.h[i]);
            assert!((dx[3 + i] - expect).abs() < 1e-12);
            assert!((dx[i] - spec.omega_s * state[3 + i]).abs() < 1e-12);
        }
    }
}
