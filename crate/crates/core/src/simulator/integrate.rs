use serde::{Deserialize, Serialize};

use super::dynamics::swing_derivatives_into;
use super::equilibrium::solve_equilibrium;
use super::stability::classify_stability;
use super::system::{Admittance, PowerSystemSpec};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Longest fault duration a scenario may carry (s).
pub const MAX_CLEARING_DURATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    /// Faultable line indices faulted concurrently; empty means no fault.
    pub lines: Vec<usize>,
    pub t_fault: f64,
    pub t_clear: f64,
    pub load_scale: f64,
}

impl FaultScenario {
    pub fn no_fault(load_scale: f64) -> Self {
        Self { lines: Vec::new(), t_fault: f64::INFINITY, t_clear: f64::INFINITY, load_scale }
    }

    pub fn duration(&self) -> f64 {
        self.t_clear - self.t_fault
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.load_scale > 0.0 && self.load_scale.is_finite()) {
            return Err(Error::Config(format!("load scale {} must be positive", self.load_scale)));
        }
        if self.lines.is_empty() {
            return Ok(());
        }
        // Small slack keeps a sampled 0.3 s duration valid after float rounding.
        if !(self.t_fault < self.t_clear && self.t_clear <= self.t_fault + MAX_CLEARING_DURATION + 1e-12) {
            return Err(Error::Config(format!(
                "fault window [{}, {}] violates t_fault < t_clear <= t_fault + {MAX_CLEARING_DURATION}",
                self.t_fault, self.t_clear
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Output sample spacing (s).
    pub dt: f64,
    /// Simulated duration (s); the trajectory has `horizon / dt` samples.
    pub horizon: f64,
    /// RK4 substeps per output sample.
    pub substeps: usize,
    /// COI angle deviation beyond which a machine is out of step (rad).
    pub oos_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.02, horizon: 10.0, substeps: 4, oos_threshold: std::f64::consts::PI }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) || self.substeps == 0 {
            return Err(Error::Config(format!("invalid simulation settings {self:?}")));
        }
        Ok(())
    }
}

/// Admittance sequence for one scenario.
struct Switching<'a> {
    scenario: &'a FaultScenario,
    pre: &'a Admittance,
    fault: Admittance,
    post: Admittance,
}

impl Switching<'_> {
    fn at(&self, t: f64) -> &Admittance {
        if self.scenario.lines.is_empty() || t < self.scenario.t_fault {
            self.pre
        } else if t < self.scenario.t_clear {
            &self.fault
        } else {
            &self.post
        }
    }
}

/// Integrates from the pre-fault equilibrium at the scenario's loading.
pub fn integrate(spec: &PowerSystemSpec, scenario: &FaultScenario, config: &SimConfig) -> Result<Trajectory> {
    let eq = solve_equilibrium(spec, scenario.load_scale)?;
    let initial: Vec<f64> = eq.delta.iter().copied().chain(std::iter::repeat_n(0.0, spec.n_g)).collect();
    integrate_from(spec, scenario, &eq.pm, &initial, config)
}

/// Integrates from an arbitrary initial state with a fixed dispatch.
pub fn integrate_from(
    spec: &PowerSystemSpec,
    scenario: &FaultScenario,
    pm: &[f64],
    initial: &[f64],
    config: &SimConfig,
) -> Result<Trajectory> {
    config.validate()?;
    scenario.validate()?;
    let n = spec.n_g;
    if initial.len() != 2 * n || pm.len() != n {
        return Err(Error::Shape("initial state must have 2·n_g entries".into()));
    }
    let (fault, post) = spec.contingency_admittances(&scenario.lines)?;
    let switching = Switching { scenario, pre: &spec.y_pre, fault, post };
    let steps = config.steps();
    let mut channels = vec![Vec::with_capacity(steps); 2 * n];
    let mut rk = Rk4::new(2 * n);
    let mut state = initial.to_vec();
    let events = [scenario.t_fault, scenario.t_clear];
    let h = config.dt / config.substeps as f64;

    for k in 0..steps {
        for (ch, &v) in channels.iter_mut().zip(&state) {
            ch.push(v);
        }
        if k + 1 == steps {
            break;
        }
        let t0 = k as f64 * config.dt;
        for s in 0..config.substeps {
            let a = t0 + s as f64 * h;
            let b = t0 + (s + 1) as f64 * h;
            let mut start = a;
            let mut cuts: Vec<f64> = events.iter().copied().filter(|&e| e > a + 1e-12 && e < b - 1e-12).collect();
            cuts.push(b);
            for end in cuts {
                let y = switching.at(0.5 * (start + end));
                rk.step(spec, y, pm, &mut state, end - start);
                start = end;
            }
            if state.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup { time: b });
            }
        }
    }
    let verdict = classify_stability(&channels[..n], &spec.h, config.oos_threshold);
    Ok(Trajectory {
        dt: config.dt,
        channels,
        label: verdict.label,
        oos: verdict.out_of_step,
        scenario: Some(scenario.clone()),
        predicted: false,
    })
}

struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    pe: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim], pe: vec![0.0; dim / 2] }
    }

    fn step(&mut self, spec: &PowerSystemSpec, y: &Admittance, pm: &[f64], x: &mut [f64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        swing_derivatives_into(spec, y, pm, x, &mut self.pe, k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        swing_derivatives_into(spec, y, pm, &self.tmp, &mut self.pe, k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        swing_derivatives_into(spec, y, pm, &self.tmp, &mut self.pe, k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * k3[i];
        }
        swing_derivatives_into(spec, y, pm, &self.tmp, &mut self.pe, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{builtin, StabilityLabel};

    #[test]
    fn no_fault_stays_at_equilibrium() {
        let spec = builtin::three_machine();
        let traj = integrate(&spec, &FaultScenario::no_fault(1.1), &SimConfig::default()).unwrap();
        assert_eq!(traj.len(), 500);
        for ch in &traj.channels[..3] {
            let drift = ch.iter().map(|v| (v - ch[0]).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-9, "drift {drift}");
        }
        assert_eq!(traj.label, StabilityLabel::Stable);
    }

    #[test]
    fn long_fault_is_unstable_short_fault_is_stable() {
        let spec = builtin::three_machine();
        let config = SimConfig { horizon: 4.0, ..SimConfig::default() };
        let mk = |d: f64| FaultScenario { lines: vec![2], t_fault: 1.0, t_clear: 1.0 + d, load_scale: 1.0 };
        assert_eq!(integrate(&spec, &mk(0.02), &config).unwrap().label, StabilityLabel::Stable);
        assert_eq!(integrate(&spec, &mk(0.3), &config).unwrap().label, StabilityLabel::Unstable);
    }

    #[test]
    fn scenario_validation() {
        let bad = FaultScenario { lines: vec![0], t_fault: 1.0, t_clear: 1.31, load_scale: 1.0 };
        assert!(bad.validate().is_err());
        let bad = FaultScenario { lines: vec![0], t_fault: 1.0, t_clear: 1.0, load_scale: 1.0 };
        assert!(bad.validate().is_err());
        let ok = FaultScenario { lines: vec![0], t_fault: 1.0, t_clear: 1.3, load_scale: 1.0 };
        assert!(ok.validate().is_ok());
    }
}
