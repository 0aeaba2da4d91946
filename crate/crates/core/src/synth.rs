//! Synthetic data: random scene graphs for property checks and a small
//! traffic simulator (straight movers plus yielding / crossing pairs) for
//! desk-scale training experiments.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{scene_graph, AdjacencyMode, SceneGraph, DEFAULT_RADIUS};
use crate::numerics::{seeded_rng, Matrix, SeededRng};
use crate::traj::{wrap_angle, AgentTrack, AgentType, Pose};

/// Random kernel-adjacency scene: positions uniform in `[-half_extent,
/// half_extent]²`, standard-normal features.
pub fn random_scene_graph(rng: &mut SeededRng, n: usize, input_dim: usize, half_extent: f64) -> Result<SceneGraph> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let features = Matrix::from_fn(n, input_dim, |_, _| normal.sample(rng));
    let positions = (0..n)
        .map(|_| [rng.random_range(-half_extent..=half_extent), rng.random_range(-half_extent..=half_extent)])
        .collect();
    scene_graph(features, positions, AdjacencyMode::Kernel, DEFAULT_RADIUS)
}

/// Nodes on a line `spacing` metres apart; with `spacing` between half the
/// radius and the radius only consecutive nodes are connected.
pub fn path_scene_graph(rng: &mut SeededRng, n: usize, input_dim: usize, spacing: f64) -> Result<SceneGraph> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let features = Matrix::from_fn(n, input_dim, |_, _| normal.sample(rng));
    let positions = (0..n).map(|i| [i as f64 * spacing, 0.0]).collect();
    scene_graph(features, positions, AdjacencyMode::Kernel, DEFAULT_RADIUS)
}

/// Parameters of the traffic simulator. Every scene is its own recording of
/// exactly `t_obs + t_pred` frames, so windowing yields one sample per scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub scenes: usize,
    pub min_agents: usize,
    pub max_agents: usize,
    /// Probability that a scene contains a crossing pair with a yielding agent.
    pub crossing_fraction: f64,
    /// Standard deviation of the position measurement noise, metres.
    pub noise_std: f64,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Frame period in seconds.
    pub dt: f64,
    pub seed: u64,
    /// Prefix of the generated recording ids.
    pub prefix: alloc::string::String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            scenes: 100,
            min_agents: 3,
            max_agents: 6,
            crossing_fraction: 0.5,
            noise_std: 0.05,
            t_obs: 8,
            t_pred: 12,
            dt: 0.4,
            seed: 0,
            prefix: "synth".into(),
        }
    }
}

impl SynthConfig {
    /// Every scene holds a crossing pair plus at most one bystander, so the
    /// pair dominates each scene's overlap fraction.
    pub fn crossing_heavy(scenes: usize, seed: u64) -> Self {
        Self {
            scenes,
            min_agents: 2,
            max_agents: 3,
            crossing_fraction: 1.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_agents < 2 || self.max_agents < self.min_agents {
            return Err(Error::InvalidArgument(format!(
                "agent range {}..={} needs at least 2 agents",
                self.min_agents, self.max_agents
            )));
        }
        if !(0.0..=1.0).contains(&self.crossing_fraction) || self.noise_std < 0.0 || self.dt <= 0.0 {
            return Err(Error::InvalidArgument(
                "crossing_fraction in [0, 1], noise_std >= 0 and dt > 0 required".into(),
            ));
        }
        if self.t_obs < 2 || self.t_pred == 0 {
            return Err(Error::InvalidArgument("t_obs >= 2 and t_pred >= 1 required".into()));
        }
        Ok(())
    }
}

fn speed_range(ty: AgentType) -> (f64, f64) {
    match ty {
        AgentType::Vehicle => (3.0, 7.0),
        AgentType::Bicycle => (2.0, 4.5),
        AgentType::Pedestrian => (0.8, 1.8),
    }
}

fn random_type(rng: &mut SeededRng) -> AgentType {
    AgentType::ALL[rng.random_range(0..3)]
}

/// Noise-free path of one agent: `(x, y, heading)` per frame.
type Path = Vec<[f64; 3]>;

fn straight_path(start: [f64; 2], heading: f64, speed: f64, frames: usize, dt: f64) -> Path {
    (0..frames)
        .map(|t| {
            let s = speed * dt * t as f64;
            [start[0] + s * libm::cos(heading), start[1] + s * libm::sin(heading), heading]
        })
        .collect()
}

/// Two agents whose paths cross at `centre`: the priority agent keeps its
/// speed, the yielding one brakes to a stop line short of the conflict point
/// until the priority agent has cleared it, then accelerates back.
fn crossing_pair(rng: &mut SeededRng, cfg: &SynthConfig, frames: usize) -> ((AgentType, Path), (AgentType, Path)) {
    const BRAKE: f64 = 2.0;
    const ACCEL: f64 = 1.5;
    const STOP_GAP: f64 = 4.0;
    const CLEARANCE: f64 = 3.0;

    let centre = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
    let ta = random_type(rng);
    let tb = random_type(rng);
    let (lo, hi) = speed_range(ta);
    let va = rng.random_range(lo..hi);
    let (lo, hi) = speed_range(tb);
    let vb0 = rng.random_range(lo..hi);

    let ha = rng.random_range(-PI..PI);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let hb = wrap_angle(ha + side * rng.random_range(PI / 3.0..2.0 * PI / 3.0));

    // Priority agent reaches the centre a few frames after the anchor.
    let arrive = (cfg.t_obs as f64 + rng.random_range(0.0..4.0)) * cfg.dt;
    let da = va * arrive;
    let start_a = [centre[0] - da * libm::cos(ha), centre[1] - da * libm::sin(ha)];
    let path_a = straight_path(start_a, ha, va, frames, cfg.dt);

    // Yielding agent would reach the centre at about the same time.
    let db = vb0 * arrive * rng.random_range(0.8..1.2);
    let start_b = [centre[0] - db * libm::cos(hb), centre[1] - db * libm::sin(hb)];
    let mut path_b = Vec::with_capacity(frames);
    let mut s = 0.0;
    let mut v = vb0;
    for t in 0..frames {
        path_b.push([start_b[0] + s * libm::cos(hb), start_b[1] + s * libm::sin(hb), hb]);
        let a_progress = va * cfg.dt * t as f64;
        let cleared = a_progress > da + CLEARANCE;
        let to_stop = db - STOP_GAP - s;
        let desired = if cleared || to_stop < -STOP_GAP {
            vb0
        } else {
            vb0.min(libm::sqrt(2.0 * BRAKE * to_stop.max(0.0)))
        };
        v = if desired < v { desired } else { (v + ACCEL * cfg.dt).min(desired) };
        s += v * cfg.dt;
    }
    ((ta, path_a), (tb, path_b))
}

/// Simulated recordings, one per scene, with ids `"{prefix}-{k:05}"`.
pub fn synthetic_tracks(cfg: &SynthConfig) -> Result<Vec<AgentTrack>> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("positive std");
    let frames = cfg.t_obs + cfg.t_pred;
    let mut tracks = Vec::new();
    for scene in 0..cfg.scenes {
        let n = rng.random_range(cfg.min_agents..=cfg.max_agents);
        let mut agents: Vec<(AgentType, Path)> = Vec::with_capacity(n);
        if rng.random_bool(cfg.crossing_fraction) {
            let (a, b) = crossing_pair(&mut rng, cfg, frames);
            agents.push(a);
            agents.push(b);
        }
        while agents.len() < n {
            let ty = random_type(&mut rng);
            let (lo, hi) = speed_range(ty);
            let speed = rng.random_range(lo..hi);
            let heading = rng.random_range(-PI..PI);
            // Start so that the anchor position lands near the scene centre.
            let back = speed * cfg.dt * (cfg.t_obs - 1) as f64;
            let mid = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)];
            let start = [mid[0] - back * libm::cos(heading), mid[1] - back * libm::sin(heading)];
            agents.push((ty, straight_path(start, heading, speed, frames, cfg.dt)));
        }
        let recording_id = format!("{}-{scene:05}", cfg.prefix);
        for (k, (agent_type, path)) in agents.into_iter().enumerate() {
            let frames = path
                .into_iter()
                .enumerate()
                .map(|(t, [x, y, heading])| {
                    let (nx, ny) = if cfg.noise_std > 0.0 {
                        (noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    Pose {
                        frame: t as i64,
                        x: x + nx,
                        y: y + ny,
                        heading,
                    }
                })
                .collect();
            tracks.push(AgentTrack {
                recording_id: recording_id.clone(),
                agent_id: k as i64,
                agent_type,
                frames,
            });
        }
    }
    Ok(tracks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{window_sequences, WindowConfig};

    #[test]
    fn one_sample_per_scene() {
        let cfg = SynthConfig {
            scenes: 7,
            ..SynthConfig::default()
        };
        let tracks = synthetic_tracks(&cfg).unwrap();
        let samples = window_sequences(
            &tracks,
            WindowConfig {
                t_obs: 8,
                t_pred: 12,
                stride: 1,
            },
        )
        .unwrap();
        assert_eq!(samples.len(), 7);
        assert!(samples.iter().all(|s| s.loss_mask.iter().all(|&m| m)));
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SynthConfig::crossing_heavy(5, 11);
        assert_eq!(synthetic_tracks(&cfg).unwrap(), synthetic_tracks(&cfg).unwrap());
    }

    #[test]
    fn yielding_agent_stays_behind_the_stop_line_while_priority_agent_passes() {
        let cfg = SynthConfig {
            noise_std: 0.0,
            ..SynthConfig::crossing_heavy(1, 3)
        };
        let mut rng = seeded_rng(3);
        for _ in 0..50 {
            let ((_, a), (_, b)) = crossing_pair(&mut rng, &cfg, 20);
            let min_gap = a
                .iter()
                .zip(&b)
                .map(|(p, q)| libm::hypot(p[0] - q[0], p[1] - q[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(min_gap > 1.0, "min gap {min_gap}");
        }
    }

    #[test]
    fn path_graph_connects_neighbours_only() {
        let g = path_scene_graph(&mut seeded_rng(0), 5, 3, 15.0).unwrap();
        let pairs: Vec<(usize, usize)> = g.spatial_edges().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, alloc::vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            min_agents: 1,
            ..SynthConfig::default()
        };
        assert!(synthetic_tracks(&cfg).is_err());
    }
}
