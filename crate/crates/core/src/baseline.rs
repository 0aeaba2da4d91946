//! Constant-velocity extrapolation, the reference any learned model should beat.

use crate::numerics::Matrix;
use crate::traj::{SequenceSample, FEATURES};

/// Extrapolates each agent's last observed displacement over `t_pred` steps.
/// Agents without two consecutive observations at the end of the window are
/// held still.
pub fn constant_velocity(sample: &SequenceSample) -> Matrix {
    let n = sample.num_agents();
    let t_obs = sample.t_obs;
    let mut out = Matrix::zeros(n, 2 * sample.t_pred);
    for i in 0..n {
        let last = sample.anchor_position(i);
        let v = if t_obs >= 2 && sample.is_present(i, t_obs - 1) && sample.is_present(i, t_obs - 2) {
            let b = (t_obs - 2) * FEATURES;
            [last[0] - sample.obs.get(i, b), last[1] - sample.obs.get(i, b + 1)]
        } else {
            [0.0, 0.0]
        };
        for t in 0..sample.t_pred {
            let k = (t + 1) as f64;
            out.set(i, 2 * t, last[0] + k * v[0]);
            out.set(i, 2 * t + 1, last[1] + k * v[1]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{build_window, AgentTrack, AgentType, Pose};
    use alloc::vec::Vec;

    fn track(id: i64, xs: &[(f64, f64)]) -> AgentTrack {
        AgentTrack {
            recording_id: "r".into(),
            agent_id: id,
            agent_type: AgentType::Vehicle,
            frames: xs
                .iter()
                .enumerate()
                .map(|(t, &(x, y))| Pose {
                    frame: t as i64,
                    x,
                    y,
                    heading: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn exact_on_straight_motion() {
        let pts: Vec<(f64, f64)> = (0..7).map(|t| (t as f64 * 1.5, 2.0 - t as f64 * 0.5)).collect();
        let tr = track(0, &pts);
        let s = build_window(&[&tr], 2, 3, 4).unwrap();
        let pred = constant_velocity(&s);
        assert!(pred.max_abs_diff(&s.fut).unwrap() < 1e-12);
    }

    #[test]
    fn single_observation_stays_put() {
        let a = track(0, &[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let mut b = track(1, &[(5.0, 5.0)]);
        b.frames[0].frame = 1;
        let s = build_window(&[&a, &b], 1, 2, 2).unwrap();
        let pred = constant_velocity(&s);
        assert_eq!(pred.row(1), &[5.0, 5.0, 5.0, 5.0]);
    }
}
