//! Trajectory container and the `TSATRAJ1` dataset file format.
//!
//! Layout (little-endian): magic `TSATRAJ1`, `u32` trajectory count, then per
//! trajectory `u32 n_x`, `u32 T`, `f64 dt`, `u8` label byte, `n_x / 2` out-of-step
//! flag bytes, and `n_x·T` `f64` samples in channel-major order. Bit 0 of the
//! label byte marks an unstable trajectory; bit 7 marks model-predicted content.

use std::io::Write;
use std::path::Path;

use super::integrate::FaultScenario;
use super::stability::StabilityLabel;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"TSATRAJ1";

const LABEL_UNSTABLE: u8 = 0x01;
const LABEL_PREDICTED: u8 = 0x80;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    /// `n_x` series of `T` samples: angles (rad) of every machine, then
    /// speed deviations (p.u.).
    pub channels: Vec<Vec<f64>>,
    pub label: StabilityLabel,
    pub oos: Vec<bool>,
    /// Generating scenario; not persisted in dataset files.
    pub scenario: Option<FaultScenario>,
    pub predicted: bool,
}

impl Trajectory {
    pub fn n_x(&self) -> usize {
        self.channels.len()
    }

    pub fn n_g(&self) -> usize {
        self.channels.len() / 2
    }

    /// Number of time samples `T`.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().flatten().all(|v| v.is_finite())
    }

    pub fn is_unstable(&self) -> bool {
        self.label == StabilityLabel::Unstable
    }
}

pub fn encode_dataset(trajectories: &[Trajectory]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(trajectories.len() as u32).to_le_bytes());
    for (k, traj) in trajectories.iter().enumerate() {
        let n_x = traj.n_x();
        let t = traj.len();
        if n_x % 2 != 0 || traj.channels.iter().any(|c| c.len() != t) || traj.oos.len() != n_x / 2 {
            return Err(Error::Shape(format!("trajectory {k} has ragged channels or flags")));
        }
        out.extend_from_slice(&(n_x as u32).to_le_bytes());
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&traj.dt.to_le_bytes());
        let mut label = if traj.is_unstable() { LABEL_UNSTABLE } else { 0 };
        if traj.predicted {
            label |= LABEL_PREDICTED;
        }
        out.push(label);
        out.extend(traj.oos.iter().map(|&f| f as u8));
        for ch in &traj.channels {
            for v in ch {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }
}

pub fn decode_dataset(bytes: &[u8], origin: &Path) -> Result<Vec<Trajectory>> {
    let truncated = |what: &str| Error::corrupt(origin, format!("truncated while reading {what}"));
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8) != Some(DATASET_MAGIC.as_slice()) {
        return Err(Error::corrupt(origin, "missing TSATRAJ1 magic"));
    }
    let count = cur.u32().ok_or_else(|| truncated("trajectory count"))? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for k in 0..count {
        let n_x = cur.u32().ok_or_else(|| truncated("n_x"))? as usize;
        let t = cur.u32().ok_or_else(|| truncated("T"))? as usize;
        let dt = cur.f64().ok_or_else(|| truncated("dt"))?;
        let label = cur.u8().ok_or_else(|| truncated("label"))?;
        if n_x % 2 != 0 {
            return Err(Error::corrupt(origin, format!("trajectory {k} has odd channel count {n_x}")));
        }
        let oos = cur.take(n_x / 2).ok_or_else(|| truncated("out-of-step flags"))?.iter().map(|&b| b != 0).collect();
        let mut channels = Vec::with_capacity(n_x);
        for _ in 0..n_x {
            let raw = cur.take(t * 8).ok_or_else(|| truncated("samples"))?;
            channels.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        out.push(Trajectory {
            dt,
            channels,
            label: if label & LABEL_UNSTABLE != 0 { StabilityLabel::Unstable } else { StabilityLabel::Stable },
            oos,
            scenario: None,
            predicted: label & LABEL_PREDICTED != 0,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::corrupt(origin, "trailing bytes after last trajectory"));
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let bytes = encode_dataset(trajectories)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes, path)
}

/// Long-format CSV: one row per sample.
pub fn write_dataset_csv(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "trajectory,label,predicted,channel,kind,machine,oos,step,time,value").map_err(io)?;
    for (k, traj) in trajectories.iter().enumerate() {
        let n_g = traj.n_g();
        let label = match traj.label {
            StabilityLabel::Stable => "stable",
            StabilityLabel::Unstable => "unstable",
        };
        for (c, ch) in traj.channels.iter().enumerate() {
            let (kind, machine) = if c < n_g { ("delta", c) } else { ("omega", c - n_g) };
            for (s, v) in ch.iter().enumerate() {
                writeln!(
                    w,
                    "{k},{label},{},{c},{kind},{machine},{},{s},{:.6},{v:e}",
                    traj.predicted as u8,
                    traj.oos[machine] as u8,
                    s as f64 * traj.dt
                )
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}
