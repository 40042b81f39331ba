//! Unreduced bus network and Kron reduction onto machine internal nodes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::system::Admittance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, split evenly between the ends.
    #[serde(default)]
    pub b: f64,
    /// Transmission lines can be faulted; generator step-up transformers cannot.
    pub faultable: bool,
}

/// Constant-impedance load, converted from its power at voltage `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBus {
    pub bus: usize,
    /// Transient reactance behind which the internal voltage sits.
    pub xd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: usize,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    pub generators: Vec<GeneratorBus>,
}

impl Network {
    pub fn faultable_count(&self) -> usize {
        self.branches.iter().filter(|b| b.faultable).count()
    }

    /// Branch index of the `line`-th faultable line.
    pub fn faultable_branch(&self, line: usize) -> Option<usize> {
        self.branches.iter().enumerate().filter(|(_, b)| b.faultable).nth(line).map(|(i, _)| i)
    }

    fn branches_for(&self, lines: &[usize]) -> Result<Vec<usize>> {
        lines
            .iter()
            .map(|&l| self.faultable_branch(l).ok_or_else(|| Error::Config(format!("no faultable line {l}"))))
            .collect()
    }

    /// True when every bus is reachable from generator buses once the given
    /// branches are removed.
    pub fn is_connected_without(&self, removed_branches: &[usize]) -> bool {
        let mut adj = vec![Vec::new(); self.buses];
        for (k, br) in self.branches.iter().enumerate() {
            if !removed_branches.contains(&k) {
                adj[br.from].push(br.to);
                adj[br.to].push(br.from);
            }
        }
        let mut seen = vec![false; self.buses];
        let mut stack: Vec<usize> = self.generators.iter().map(|g| g.bus).take(1).collect();
        while let Some(b) = stack.pop() {
            if std::mem::replace(&mut seen[b], true) {
                continue;
            }
            stack.extend(adj[b].iter().copied().filter(|&n| !seen[n]));
        }
        seen.into_iter().all(|s| s)
    }

    /// Reduced admittance with `shorted` buses held at zero voltage and
    /// `removed` branches out of service.
    pub fn reduce(&self, shorted: &[usize], removed: &[usize]) -> Result<Admittance> {
        let nb = self.buses;
        let ng = self.generators.len();
        let n = nb + ng;
        let mut y = DMatrix::<Complex64>::zeros(n, n);
        let mut stamp = |i: usize, j: usize, ys: Complex64| {
            y[(i, i)] += ys;
            y[(j, j)] += ys;
            y[(i, j)] -= ys;
            y[(j, i)] -= ys;
        };
        for (k, br) in self.branches.iter().enumerate() {
            if removed.contains(&k) {
                continue;
            }
            stamp(br.from, br.to, Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x));
        }
        for (k, g) in self.generators.iter().enumerate() {
            stamp(nb + k, g.bus, Complex64::new(0.0, -1.0 / g.xd));
        }
        for (k, br) in self.branches.iter().enumerate() {
            if !removed.contains(&k) && br.b != 0.0 {
                let half = Complex64::new(0.0, br.b / 2.0);
                y[(br.from, br.from)] += half;
                y[(br.to, br.to)] += half;
            }
        }
        for load in &self.loads {
            y[(load.bus, load.bus)] += Complex64::new(load.p, -load.q) / (load.v * load.v);
        }

        let kept: Vec<usize> = (0..nb).filter(|b| !shorted.contains(b)).collect();
        let internal: Vec<usize> = (nb..n).collect();
        let pick =
            |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| y[(rows[r], cols[c])]);
        let y_ii = pick(&internal, &internal);
        let y_ib = pick(&internal, &kept);
        let y_bb = pick(&kept, &kept);
        let y_bi = pick(&kept, &internal);
        let solved =
            y_bb.lu().solve(&y_bi).ok_or_else(|| Error::Config("singular bus admittance during reduction".into()))?;
        let reduced = y_ii - y_ib * solved;
        let mut out = Admittance::zeros(ng);
        for i in 0..ng {
            for j in 0..ng {
                // Symmetrize away round-off from the LU solve.
                out.set(i, j, (reduced[(i, j)] + reduced[(j, i)]) * 0.5);
            }
        }
        Ok(out)
    }

    pub fn pre_fault(&self) -> Result<Admittance> {
        self.reduce(&[], &[])
    }

    /// Three-phase bus faults at the from-end of each line, cleared by
    /// tripping those lines.
    pub fn contingency_admittances(&self, lines: &[usize]) -> Result<(Admittance, Admittance)> {
        let branches = self.branches_for(lines)?;
        if !self.is_connected_without(&branches) {
            return Err(Error::Config(format!("tripping lines {lines:?} islands the network")));
        }
        let mut shorted: Vec<usize> = branches.iter().map(|&k| self.branches[k].from).collect();
        shorted.sort_unstable();
        shorted.dedup();
        Ok((self.reduce(&shorted, &[])?, self.reduce(&[], &branches)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus() -> Network {
        Network {
            buses: 2,
            branches: vec![Branch { from: 0, to: 1, r: 0.0, x: 0.5, b: 0.0, faultable: true }],
            loads: vec![],
            generators: vec![GeneratorBus { bus: 0, xd: 0.25 }, GeneratorBus { bus: 1, xd: 0.25 }],
        }
    }

    #[test]
    fn series_reactances_combine() {
        // Internal nodes joined by 0.25 + 0.5 + 0.25 = 1.0 p.u. reactance.
        let y = two_bus().pre_fault().unwrap();
        assert!((y.b(0, 1) - 1.0).abs() < 1e-12);
        assert!((y.b(0, 0) + 1.0).abs() < 1e-12);
        assert!(y.g(0, 1).abs() < 1e-12);
    }

    #[test]
    fn shorted_bus_decouples_machines() {
        let y = two_bus().reduce(&[0], &[]).unwrap();
        assert!(y.get(0, 1).norm() < 1e-12);
        assert!((y.b(0, 0) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn islanding_is_detected() {
        let net = two_bus();
        assert!(!net.is_connected_without(&[0]));
        assert!(net.contingency_admittances(&[0]).is_err());
    }
}
