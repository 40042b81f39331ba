use log::warn;
use serde::{Deserialize, Serialize};

use crate::numerics::Scalar;
use crate::simulator::Trajectory;

use super::channels::ChannelSeries;

/// Location of a window inside a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowOrigin {
    pub trajectory: usize,
    pub channel: usize,
    pub start: usize,
}

/// Input/target pair with the statistics that map the input to physical
/// units. Raw windows carry the identity transform `μ = 0, σ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample<T> {
    pub input: Vec<T>,
    pub target: Vec<T>,
    pub mu: T,
    pub sigma: T,
    pub origin: WindowOrigin,
}

/// Sliding windows per series of length `t`; zero when the series is short.
pub fn window_count(t: usize, l_seq: usize, l_pred: usize) -> usize {
    (t + 1).saturating_sub(l_seq + l_pred)
}

/// Unit-stride raw windows over one channel series.
pub fn segment<T: Scalar>(series: &ChannelSeries<T>, l_seq: usize, l_pred: usize) -> Vec<WindowSample<T>> {
    let t = series.values.len();
    let n = window_count(t, l_seq, l_pred);
    if n == 0 {
        warn!(
            "series of trajectory {} has {t} samples, fewer than L_seq + L_pred = {}",
            series.trajectory,
            l_seq + l_pred
        );
        return Vec::new();
    }
    (0..n)
        .map(|s| WindowSample {
            input: series.values[s..s + l_seq].to_vec(),
            target: series.values[s + l_seq..s + l_seq + l_pred].to_vec(),
            mu: T::zero(),
            sigma: T::one(),
            origin: WindowOrigin { trajectory: series.trajectory, channel: series.channel, start: s },
        })
        .collect()
}

/// Every window position over a trajectory set, in (trajectory, channel,
/// start) order.
pub fn window_origins(trajectories: &[Trajectory], l_seq: usize, l_pred: usize) -> Vec<WindowOrigin> {
    let mut out = Vec::new();
    for (k, traj) in trajectories.iter().enumerate() {
        let n = window_count(traj.len(), l_seq, l_pred);
        for channel in 0..traj.n_x() {
            out.extend((0..n).map(|start| WindowOrigin { trajectory: k, channel, start }));
        }
    }
    out
}

/// Raw window at `origin`, read straight from the trajectory.
pub fn extract_window<T: Scalar>(
    trajectories: &[Trajectory],
    origin: WindowOrigin,
    l_seq: usize,
    l_pred: usize,
) -> WindowSample<T> {
    let values = &trajectories[origin.trajectory].channels[origin.channel];
    let s = origin.start;
    let conv = |xs: &[f64]| xs.iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
    WindowSample {
        input: conv(&values[s..s + l_seq]),
        target: conv(&values[s + l_seq..s + l_seq + l_pred]),
        mu: T::zero(),
        sigma: T::one(),
        origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::{ChannelId, ChannelKind};

    fn ramp(t: usize) -> ChannelSeries<f64> {
        ChannelSeries {
            values: (0..t).map(|i| i as f64).collect(),
            id: ChannelId { machine: 0, kind: ChannelKind::Angle },
            channel: 0,
            trajectory: 0,
        }
    }

    #[test]
    fn count_formula() {
        assert_eq!(segment(&ramp(67), 65, 1).len(), 2);
        assert_eq!(segment(&ramp(66), 65, 1).len(), 1);
        assert!(segment(&ramp(65), 65, 1).is_empty());
        assert_eq!(segment(&ramp(500), 65, 5).len(), 500 - 65 - 5 + 1);
    }

    #[test]
    fn overlap_consistency_on_ramp() {
        let l_pred = 3;
        let w = segment(&ramp(40), 10, l_pred);
        for s in 0..w.len() - l_pred {
            let tail = &w[s + l_pred].input[10 - l_pred..];
            assert_eq!(w[s].target.as_slice(), tail);
            assert_eq!(w[s].target[0], (s + 10) as f64);
        }
    }
}
