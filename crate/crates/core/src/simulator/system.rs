use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

/// Reduced admittance matrix among machine internal nodes, stored as
/// separate row-major conductance and susceptance arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Admittance {
    n: usize,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl Admittance {
    pub fn zeros(n: usize) -> Self {
        Self { n, g: vec![0.0; n * n], b: vec![0.0; n * n] }
    }

    pub fn from_complex(n: usize, entries: &[Complex64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Shape(format!("admittance needs {} entries, got {}", n * n, entries.len())));
        }
        Ok(Self { n, g: entries.iter().map(|c| c.re).collect(), b: entries.iter().map(|c| c.im).collect() })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.n + j]
    }

    #[inline]
    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, y: Complex64) {
        self.g[i * self.n + j] = y.re;
        self.b[i * self.n + j] = y.im;
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.g(i, j), self.b(i, j))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            (0..i).all(|j| (self.g(i, j) - self.g(j, i)).abs() <= tol && (self.b(i, j) - self.b(j, i)).abs() <= tol)
        })
    }

    /// Copy with every off-diagonal conductance removed.
    pub fn lossless_transfer(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    out.g[i * self.n + j] = 0.0;
                }
            }
        }
        out
    }

    fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.n).map(|i| (0..self.n).map(|j| [self.g(i, j), self.b(i, j)]).collect()).collect()
    }

    fn from_pairs(rows: &[Vec<[f64; 2]>], n: usize, what: &str) -> Result<Self> {
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation(format!("{what} must be {n}x{n}")));
        }
        let entries: Vec<Complex64> = rows.iter().flatten().map(|&[re, im]| Complex64::new(re, im)).collect();
        Self::from_complex(n, &entries)
    }
}

/// Classical multi-machine system with network reduced to internal nodes.
///
/// Machine 0 is the angle reference and absorbs dispatch mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemSpec {
    pub name: String,
    pub n_g: usize,
    /// Inertia constants (s).
    pub h: Vec<f64>,
    /// Damping (p.u. power per p.u. speed).
    pub d: Vec<f64>,
    /// Nominal mechanical powers (p.u.).
    pub pm: Vec<f64>,
    /// Internal voltage magnitudes (p.u.).
    pub e: Vec<f64>,
    pub y_pre: Admittance,
    /// Fault-on admittance, one per faultable line.
    pub y_fault_by_line: Vec<Admittance>,
    /// Post-clearing admittance, one per faultable line.
    pub y_post_by_line: Vec<Admittance>,
    /// Synchronous speed (rad/s).
    pub omega_s: f64,
    /// Unreduced network, needed for multi-line contingencies.
    pub network: Option<Network>,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    #[serde(default)]
    name: String,
    n_g: usize,
    #[serde(rename = "H")]
    h: Vec<f64>,
    #[serde(rename = "D")]
    d: Vec<f64>,
    #[serde(rename = "Pm")]
    pm: Vec<f64>,
    #[serde(rename = "E")]
    e: Vec<f64>,
    #[serde(rename = "Y_pre")]
    y_pre: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "Y_fault_by_line")]
    y_fault_by_line: Vec<Vec<Vec<[f64; 2]>>>,
    #[serde(rename = "Y_post_by_line")]
    y_post_by_line: Vec<Vec<Vec<[f64; 2]>>>,
    omega_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    network: Option<Network>,
}

impl PowerSystemSpec {
    pub fn n_x(&self) -> usize {
        2 * self.n_g
    }

    pub fn faultable_lines(&self) -> usize {
        self.y_fault_by_line.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_g;
        if n == 0 {
            return Err(Error::Validation("system has no machines".into()));
        }
        for (name, v) in [("H", &self.h), ("D", &self.d), ("Pm", &self.pm), ("E", &self.e)] {
            if v.len() != n {
                return Err(Error::Validation(format!("{name} has {} entries, expected {n}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        if self.h.iter().any(|&h| h <= 0.0) {
            return Err(Error::Validation("inertia constants must be positive".into()));
        }
        if self.d.iter().any(|&d| d < 0.0) {
            return Err(Error::Validation("damping must be non-negative".into()));
        }
        if !(self.omega_s > 0.0) {
            return Err(Error::Validation("omega_s must be positive".into()));
        }
        if self.y_fault_by_line.len() != self.y_post_by_line.len() {
            return Err(Error::Validation("fault and post-fault admittance lists differ in length".into()));
        }
        let all = std::iter::once(&self.y_pre).chain(&self.y_fault_by_line).chain(&self.y_post_by_line);
        for (k, y) in all.enumerate() {
            if y.size() != n {
                return Err(Error::Validation(format!("admittance #{k} is not {n}x{n}")));
            }
            if !y.is_symmetric(1e-9) {
                return Err(Error::Validation(format!("admittance #{k} is not symmetric")));
            }
        }
        if let Some(net) = &self.network {
            if net.generators.len() != n {
                return Err(Error::Validation("network generator count differs from n_g".into()));
            }
            if net.faultable_count() != self.faultable_lines() {
                return Err(Error::Validation("network faultable lines differ from admittance lists".into()));
            }
        }
        Ok(())
    }

    /// Fault-on and post-clearing admittances for a set of concurrently
    /// faulted lines.
    pub fn contingency_admittances(&self, lines: &[usize]) -> Result<(Admittance, Admittance)> {
        for &l in lines {
            if l >= self.faultable_lines() {
                return Err(Error::Config(format!(
                    "line {l} out of range ({} faultable lines)",
                    self.faultable_lines()
                )));
            }
        }
        match lines {
            [] => Ok((self.y_pre.clone(), self.y_pre.clone())),
            [l] => Ok((self.y_fault_by_line[*l].clone(), self.y_post_by_line[*l].clone())),
            _ => {
                let net = self.network.as_ref().ok_or_else(|| {
                    Error::Config("multi-line contingencies need the unreduced network in the spec file".into())
                })?;
                net.contingency_admittances(lines)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SpecFile = serde_json::from_str(text)?;
        let n = raw.n_g;
        let convert = |rows: &[Vec<Vec<[f64; 2]>>], what: &str| -> Result<Vec<Admittance>> {
            rows.iter().enumerate().map(|(k, m)| Admittance::from_pairs(m, n, &format!("{what}[{k}]"))).collect()
        };
        let spec = Self {
            name: raw.name,
            n_g: n,
            h: raw.h,
            d: raw.d,
            pm: raw.pm,
            e: raw.e,
            y_pre: Admittance::from_pairs(&raw.y_pre, n, "Y_pre")?,
            y_fault_by_line: convert(&raw.y_fault_by_line, "Y_fault_by_line")?,
            y_post_by_line: convert(&raw.y_post_by_line, "Y_post_by_line")?,
            omega_s: raw.omega_s,
            network: raw.network,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = SpecFile {
            name: self.name.clone(),
            n_g: self.n_g,
            h: self.h.clone(),
            d: self.d.clone(),
            pm: self.pm.clone(),
            e: self.e.clone(),
            y_pre: self.y_pre.to_pairs(),
            y_fault_by_line: self.y_fault_by_line.iter().map(Admittance::to_pairs).collect(),
            y_post_by_line: self.y_post_by_line.iter().map(Admittance::to_pairs).collect(),
            omega_s: self.omega_s,
            network: self.network.clone(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
