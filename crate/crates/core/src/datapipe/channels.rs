use serde::{Deserialize, Serialize};

use crate::numerics::Scalar;
use crate::simulator::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Rotor angle (rad).
    Angle,
    /// Speed deviation from synchronous (p.u.).
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelId {
    pub machine: usize,
    pub kind: ChannelKind,
}

impl ChannelId {
    /// Position of this channel in the fixed `δ_1..δ_n, ω_1..ω_n` order.
    pub fn index(&self, n_g: usize) -> usize {
        match self.kind {
            ChannelKind::Angle => self.machine,
            ChannelKind::Speed => n_g + self.machine,
        }
    }

    pub fn from_index(index: usize, n_g: usize) -> Self {
        if index < n_g {
            Self { machine: index, kind: ChannelKind::Angle }
        } else {
            Self { machine: index - n_g, kind: ChannelKind::Speed }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSeries<T> {
    pub values: Vec<T>,
    pub id: ChannelId,
    /// Position in the canonical channel order of the source trajectory.
    pub channel: usize,
    pub trajectory: usize,
}

/// Splits a trajectory into its `n_x` univariate series, angles first.
pub fn decompose_channels<T: Scalar>(traj: &Trajectory, trajectory: usize) -> Vec<ChannelSeries<T>> {
    let n_g = traj.n_g();
    traj.channels
        .iter()
        .enumerate()
        .map(|(c, values)| ChannelSeries {
            values: values.iter().map(|&v| T::lit(v)).collect(),
            id: ChannelId::from_index(c, n_g),
            channel: c,
            trajectory,
        })
        .collect()
}

/// Inverse of [`decompose_channels`]: channel matrix in canonical order.
pub fn reassemble_channels<T: Scalar>(series: &[ChannelSeries<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new(); series.len()];
    for s in series {
        out[s.channel] = s.values.clone();
    }
    out
}
