//! Trajectory ingestion: tracks, resampling, windowing into observation /
//! prediction sequences, and per-sample normalisation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{seeded_rng, Matrix};

/// Features per observed frame: x, y, heading, and a one-hot agent type.
pub const FEATURES: usize = 6;

/// Road-user category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentType {
    Vehicle,
    Pedestrian,
    Bicycle,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Vehicle, AgentType::Pedestrian, AgentType::Bicycle];

    /// Maps recording labels onto the three categories: cars, vans, trucks and
    /// buses are vehicles, scooters count as pedestrians, motorcycles as
    /// bicycles.
    pub fn from_label(label: &str) -> Option<Self> {
        let l = label.trim().to_ascii_lowercase();
        match l.as_str() {
            "vehicle" | "car" | "van" | "truck" | "bus" | "truck_bus" => Some(Self::Vehicle),
            "pedestrian" | "scooter" => Some(Self::Pedestrian),
            "bicycle" | "bike" | "cyclist" | "motorcycle" | "motorbike" => Some(Self::Bicycle),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Vehicle => "vehicle",
            Self::Pedestrian => "pedestrian",
            Self::Bicycle => "bicycle",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Vehicle => 0,
            Self::Pedestrian => 1,
            Self::Bicycle => 2,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = a - two_pi * libm::floor((a + PI) / two_pi);
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub frame: i64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// One agent's time-ordered poses within a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub recording_id: String,
    pub agent_id: i64,
    pub agent_type: AgentType,
    pub frames: Vec<Pose>,
}

impl AgentTrack {
    pub fn pose_at(&self, frame: i64) -> Option<&Pose> {
        self.frames
            .binary_search_by_key(&frame, |p| p.frame)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// One parsed table row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub recording_id: String,
    pub frame: i64,
    pub track_id: i64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub agent_type: String,
}

/// Groups rows into tracks keyed by `(recording_id, track_id)`, sorted by
/// frame. Row numbers in errors are zero-based data rows.
pub fn tracks_from_rows(rows: &[TrajRow]) -> Result<Vec<AgentTrack>> {
    let mut grouped: BTreeMap<(String, i64), (AgentType, Vec<(usize, Pose)>)> = BTreeMap::new();
    for (row_no, row) in rows.iter().enumerate() {
        let ty = AgentType::from_label(&row.agent_type).ok_or_else(|| Error::UnknownAgentType {
            row: row_no,
            value: row.agent_type.clone(),
        })?;
        let pose = Pose {
            frame: row.frame,
            x: row.x,
            y: row.y,
            heading: wrap_angle(row.heading),
        };
        grouped
            .entry((row.recording_id.clone(), row.track_id))
            .or_insert_with(|| (ty, Vec::new()))
            .1
            .push((row_no, pose));
    }
    let mut tracks = Vec::with_capacity(grouped.len());
    for ((recording_id, agent_id), (agent_type, mut poses)) in grouped {
        poses.sort_by_key(|(row_no, p)| (p.frame, *row_no));
        for w in poses.windows(2) {
            if w[1].1.frame <= w[0].1.frame {
                return Err(Error::NonMonotoneFrames {
                    track_id: agent_id,
                    frame: w[1].1.frame,
                });
            }
        }
        tracks.push(AgentTrack {
            recording_id,
            agent_id,
            agent_type,
            frames: poses.into_iter().map(|(_, p)| p).collect(),
        });
    }
    Ok(tracks)
}

/// Keeps every `source_hz / target_hz`-th frame counted from each track's
/// first frame and renumbers frames at the target rate (`frame / step`).
pub fn resample(tracks: &[AgentTrack], source_hz: f64, target_hz: f64) -> Result<Vec<AgentTrack>> {
    let ratio = source_hz / target_hz;
    let step = libm::round(ratio);
    if !(source_hz > 0.0 && target_hz > 0.0) || step < 1.0 || (ratio - step).abs() > 1e-9 * ratio {
        return Err(Error::NonDivisibleRates {
            source_hz,
            target_hz,
        });
    }
    let step = step as i64;
    Ok(tracks
        .iter()
        .map(|t| {
            let first = t.frames.first().map_or(0, |p| p.frame);
            let frames = t
                .frames
                .iter()
                .filter(|p| (p.frame - first).rem_euclid(step) == 0)
                .map(|p| Pose {
                    frame: p.frame.div_euclid(step),
                    ..*p
                })
                .collect();
            AgentTrack {
                frames,
                ..t.clone()
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRef {
    pub agent_id: i64,
    pub agent_type: AgentType,
}

/// One training example: `N` agents, `t_obs` observed and `t_pred` future
/// frames, anchored at the last observed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub recording_id: String,
    pub anchor_frame: i64,
    pub t_obs: usize,
    pub t_pred: usize,
    pub agents: Vec<AgentRef>,
    /// `(N, t_obs · FEATURES)`, time-major per agent; absent frames are zero.
    pub obs: Matrix,
    /// `(N, t_obs)` row-major; false where the agent was not observed.
    pub presence: Vec<bool>,
    /// `(N, t_pred · 2)` future positions; absent frames are zero.
    pub fut: Matrix,
    /// `(N, t_pred)` row-major future presence.
    pub fut_presence: Vec<bool>,
    /// Agents with a complete future; only these enter the loss.
    pub loss_mask: Vec<bool>,
    /// Translation removed by [`normalize_sample`].
    pub origin: [f64; 2],
}

impl SequenceSample {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Position at the anchor (last observed) frame.
    pub fn anchor_position(&self, agent: usize) -> [f64; 2] {
        let base = (self.t_obs - 1) * FEATURES;
        [self.obs.get(agent, base), self.obs.get(agent, base + 1)]
    }

    pub fn is_present(&self, agent: usize, t: usize) -> bool {
        self.presence[agent * self.t_obs + t]
    }

    pub fn agent_types(&self) -> Vec<AgentType> {
        self.agents.iter().map(|a| a.agent_type).collect()
    }

    pub fn has_eligible(&self) -> bool {
        self.loss_mask.iter().any(|&m| m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t_obs: usize,
    pub t_pred: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            t_obs: 8,
            t_pred: 12,
            stride: 1,
        }
    }
}

/// Builds the sample whose last observed frame is `anchor`. Agents present at
/// the anchor are included; earlier gaps are zero-padded and masked.
pub fn build_window(tracks: &[&AgentTrack], anchor: i64, t_obs: usize, t_pred: usize) -> Result<SequenceSample> {
    let present: Vec<&&AgentTrack> = tracks.iter().filter(|t| t.pose_at(anchor).is_some()).collect();
    if present.is_empty() {
        return Err(Error::EmptyWindow { anchor });
    }
    let n = present.len();
    let mut obs = Matrix::zeros(n, t_obs * FEATURES);
    let mut presence = vec![false; n * t_obs];
    let mut fut = Matrix::zeros(n, t_pred * 2);
    let mut fut_presence = vec![false; n * t_pred];
    let first = anchor - t_obs as i64 + 1;
    for (i, track) in present.iter().enumerate() {
        let hot = track.agent_type.one_hot();
        for k in 0..t_obs {
            if let Some(p) = track.pose_at(first + k as i64) {
                let row = obs.row_mut(i);
                let f = &mut row[k * FEATURES..(k + 1) * FEATURES];
                f[0] = p.x;
                f[1] = p.y;
                f[2] = p.heading;
                f[3..].copy_from_slice(&hot);
                presence[i * t_obs + k] = true;
            }
        }
        for k in 0..t_pred {
            if let Some(p) = track.pose_at(anchor + 1 + k as i64) {
                fut.set(i, 2 * k, p.x);
                fut.set(i, 2 * k + 1, p.y);
                fut_presence[i * t_pred + k] = true;
            }
        }
    }
    let loss_mask = (0..n)
        .map(|i| fut_presence[i * t_pred..(i + 1) * t_pred].iter().all(|&p| p))
        .collect();
    Ok(SequenceSample {
        recording_id: present[0].recording_id.clone(),
        anchor_frame: anchor,
        t_obs,
        t_pred,
        agents: present
            .iter()
            .map(|t| AgentRef {
                agent_id: t.agent_id,
                agent_type: t.agent_type,
            })
            .collect(),
        obs,
        presence,
        fut,
        fut_presence,
        loss_mask,
        origin: [0.0, 0.0],
    })
}

/// Slides a `t_obs + t_pred` window over each recording's frame range.
/// Windows with no agent at the anchor frame are skipped.
pub fn window_sequences(tracks: &[AgentTrack], cfg: WindowConfig) -> Result<Vec<SequenceSample>> {
    if cfg.t_obs == 0 || cfg.t_pred == 0 || cfg.stride == 0 {
        return Err(Error::InvalidArgument(
            "t_obs, t_pred and stride must all be >= 1".into(),
        ));
    }
    let mut by_recording: BTreeMap<&str, Vec<&AgentTrack>> = BTreeMap::new();
    for t in tracks.iter().filter(|t| !t.frames.is_empty()) {
        by_recording.entry(t.recording_id.as_str()).or_default().push(t);
    }
    let span = (cfg.t_obs + cfg.t_pred) as i64;
    let mut out = Vec::new();
    for group in by_recording.values() {
        let lo = group.iter().map(|t| t.frames[0].frame).min().unwrap_or(0);
        let hi = group.iter().map(|t| t.frames[t.frames.len() - 1].frame).max().unwrap_or(0);
        let mut start = lo;
        while start + span - 1 <= hi {
            let anchor = start + cfg.t_obs as i64 - 1;
            match build_window(group, anchor, cfg.t_obs, cfg.t_pred) {
                Ok(s) => out.push(s),
                Err(Error::EmptyWindow { .. }) => {}
                Err(e) => return Err(e),
            }
            start += cfg.stride as i64;
        }
    }
    Ok(out)
}

/// Translates every present position so the anchor-frame centroid of the
/// scene is the origin. Headings are untouched.
pub fn normalize_sample(sample: &SequenceSample) -> SequenceSample {
    let n = sample.num_agents() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..sample.num_agents() {
        let [x, y] = sample.anchor_position(i);
        cx += x;
        cy += y;
    }
    let centroid = [cx / n, cy / n];
    let mut out = translate(sample, [-centroid[0], -centroid[1]]);
    out.origin = [sample.origin[0] + centroid[0], sample.origin[1] + centroid[1]];
    out
}

/// Inverse of [`normalize_sample`].
pub fn denormalize_sample(sample: &SequenceSample) -> SequenceSample {
    let mut out = translate(sample, sample.origin);
    out.origin = [0.0, 0.0];
    out
}

fn translate(sample: &SequenceSample, by: [f64; 2]) -> SequenceSample {
    let mut out = sample.clone();
    for i in 0..sample.num_agents() {
        for k in 0..sample.t_obs {
            if sample.presence[i * sample.t_obs + k] {
                let row = out.obs.row_mut(i);
                row[k * FEATURES] += by[0];
                row[k * FEATURES + 1] += by[1];
            }
        }
        for k in 0..sample.t_pred {
            if sample.fut_presence[i * sample.t_pred + k] {
                let row = out.fut.row_mut(i);
                row[2 * k] += by[0];
                row[2 * k + 1] += by[1];
            }
        }
    }
    out
}

/// Maps predictions in a normalised sample's frame back to world coordinates.
pub fn denormalize_positions(pred: &Matrix, origin: [f64; 2]) -> Matrix {
    Matrix::from_fn(pred.rows(), pred.cols(), |r, c| pred.get(r, c) + origin[c % 2])
}

/// Train / validation / test samples, disjoint by recording.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SequenceSample>,
    pub val: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub provenance: SplitProvenance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitProvenance {
    /// Shuffles the recording ids with `seed`, then carves off
    /// `round(test_frac · n)` test recordings and `round(val_frac · rest)`
    /// validation recordings. At least one recording always stays in train.
    pub fn by_fraction(recordings: &[String], test_frac: f64, val_frac: f64, seed: u64) -> Self {
        let mut ids: Vec<String> = recordings
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.shuffle(&mut seeded_rng(seed));
        let n = ids.len();
        let n_test = (libm::round(test_frac * n as f64) as usize).min(n.saturating_sub(1));
        let rest = n - n_test;
        let n_val = (libm::round(val_frac * rest as f64) as usize).min(rest.saturating_sub(1));
        let mut test: Vec<String> = ids[..n_test].to_vec();
        let mut val: Vec<String> = ids[n_test..n_test + n_val].to_vec();
        let mut train: Vec<String> = ids[n_test + n_val..].to_vec();
        test.sort();
        val.sort();
        train.sort();
        Self { train, val, test }
    }

    /// Named held-out recordings; everything else trains.
    pub fn explicit(recordings: &[String], val: &[String], test: &[String]) -> Result<Self> {
        let val: BTreeSet<String> = val.iter().cloned().collect();
        let test: BTreeSet<String> = test.iter().cloned().collect();
        if let Some(dup) = val.intersection(&test).next() {
            return Err(Error::InvalidArgument(alloc::format!(
                "recording `{dup}` is listed for both validation and test"
            )));
        }
        let train = recordings
            .iter()
            .filter(|r| !val.contains(*r) && !test.contains(*r))
            .cloned()
            .collect::<BTreeSet<_>>();
        Ok(Self {
            train: train.into_iter().collect(),
            val: val.into_iter().collect(),
            test: test.into_iter().collect(),
        })
    }

    pub fn is_disjoint(&self) -> bool {
        let a: BTreeSet<&String> = self.train.iter().collect();
        let b: BTreeSet<&String> = self.val.iter().collect();
        let c: BTreeSet<&String> = self.test.iter().collect();
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

impl DatasetSplit {
    /// Routes each sample to the split owning its recording; samples from
    /// unlisted recordings are dropped.
    pub fn assemble(samples: Vec<SequenceSample>, provenance: SplitProvenance) -> Result<Self> {
        if !provenance.is_disjoint() {
            return Err(Error::InvalidArgument("split recordings overlap".into()));
        }
        let mut split = DatasetSplit {
            provenance,
            ..Default::default()
        };
        for s in samples {
            if split.provenance.train.contains(&s.recording_id) {
                split.train.push(s);
            } else if split.provenance.val.contains(&s.recording_id) {
                split.val.push(s);
            } else if split.provenance.test.contains(&s.recording_id) {
                split.test.push(s);
            }
        }
        Ok(split)
    }

    pub fn get(&self, name: &str) -> Option<&[SequenceSample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn row(rec: &str, frame: i64, track: i64, x: f64, ty: &str) -> TrajRow {
        TrajRow {
            recording_id: rec.into(),
            frame,
            track_id: track,
            x,
            y: 0.5 * x,
            heading: 0.0,
            agent_type: ty.into(),
        }
    }

    fn straight(rec: &str, id: i64, frames: core::ops::Range<i64>, x0: f64) -> AgentTrack {
        AgentTrack {
            recording_id: rec.into(),
            agent_id: id,
            agent_type: AgentType::Vehicle,
            frames: frames
                .map(|f| Pose {
                    frame: f,
                    x: x0 + f as f64,
                    y: 2.0,
                    heading: 0.1,
                })
                .collect(),
        }
    }

    #[test]
    fn parse_single_track() {
        let rows = [row("r", 0, 1, 0.0, "car"), row("r", 1, 1, 1.0, "car"), row("r", 2, 1, 2.0, "car")];
        let tracks = tracks_from_rows(&rows).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].frames.len(), 3);
        assert_eq!(tracks[0].agent_type, AgentType::Vehicle);
    }

    #[test]
    fn duplicate_frame_is_rejected() {
        let rows = [row("r", 0, 1, 0.0, "car"), row("r", 1, 1, 1.0, "car"), row("r", 1, 1, 2.0, "car")];
        assert_eq!(
            tracks_from_rows(&rows),
            Err(Error::NonMonotoneFrames { track_id: 1, frame: 1 })
        );
    }

    #[test]
    fn interleaved_tracks_are_separated_and_sorted() {
        let rows = [
            row("r", 2, 7, 2.0, "pedestrian"),
            row("r", 0, 3, 10.0, "bicycle"),
            row("r", 0, 7, 0.0, "pedestrian"),
            row("r", 1, 3, 11.0, "bicycle"),
            row("r", 1, 7, 1.0, "pedestrian"),
        ];
        let tracks = tracks_from_rows(&rows).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].agent_id, 3);
        assert_eq!(tracks[0].frames.iter().map(|p| p.frame).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(tracks[1].frames.iter().map(|p| p.x).collect::<Vec<_>>(), [0.0, 1.0, 2.0]);
    }

    #[test]
    fn unknown_agent_type_names_row() {
        let rows = [row("r", 0, 1, 0.0, "car"), row("r", 1, 1, 1.0, "tram")];
        assert_eq!(
            tracks_from_rows(&rows),
            Err(Error::UnknownAgentType { row: 1, value: "tram".to_string() })
        );
    }

    #[test]
    fn agent_type_mapping() {
        assert_eq!(AgentType::from_label("Truck"), Some(AgentType::Vehicle));
        assert_eq!(AgentType::from_label("scooter"), Some(AgentType::Pedestrian));
        assert_eq!(AgentType::from_label("motorcycle"), Some(AgentType::Bicycle));
    }

    #[test]
    fn heading_wraps_into_half_open_range() {
        assert!((wrap_angle(PI) + PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.5), 0.5);
    }

    #[test]
    fn resample_examples() {
        let t = straight("r", 1, 0..25, 0.0);
        let r = resample(&[t.clone()], 25.0, 2.5).unwrap();
        assert_eq!(r[0].frames.iter().map(|p| p.frame).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(r[0].frames.iter().map(|p| p.x).collect::<Vec<_>>(), [0.0, 10.0, 20.0]);
        assert_eq!(resample(&[t.clone()], 10.0, 10.0).unwrap()[0], t);
        assert!(matches!(resample(&[t], 25.0, 10.0), Err(Error::NonDivisibleRates { .. })));
    }

    #[test]
    fn resample_keeps_first_frame_of_offset_tracks() {
        let t = straight("r", 1, 3..40, 0.0);
        let r = resample(&[t], 25.0, 2.5).unwrap();
        assert_eq!(r[0].frames[0].x, 3.0);
        assert_eq!(r[0].frames.iter().map(|p| p.frame).collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn single_agent_single_window() {
        let t = straight("r", 1, 0..20, 0.0);
        let s = window_sequences(&[t], WindowConfig { t_obs: 8, t_pred: 12, stride: 20 }).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].presence.iter().all(|&p| p));
        assert_eq!(s[0].loss_mask, [true]);
        assert_eq!(s[0].anchor_frame, 7);
        assert_eq!(s[0].fut.get(0, 0), 8.0);
    }

    #[test]
    fn late_entering_agent_is_padded() {
        let a = straight("r", 1, 0..20, 0.0);
        let b = straight("r", 2, 5..20, 100.0);
        let s = window_sequences(&[a, b], WindowConfig { t_obs: 8, t_pred: 12, stride: 20 }).unwrap();
        assert_eq!(s.len(), 1);
        let s = &s[0];
        assert_eq!(s.num_agents(), 2);
        assert_eq!(&s.presence[8..], &[false, false, false, false, false, true, true, true]);
        assert!(s.obs.row(1)[..5 * FEATURES].iter().all(|&v| v == 0.0));
        assert_eq!(s.obs.get(1, 5 * FEATURES), 105.0);
    }

    #[test]
    fn short_range_and_missing_future() {
        let t = straight("r", 1, 0..19, 0.0);
        assert!(window_sequences(&[t.clone()], WindowConfig { t_obs: 8, t_pred: 12, stride: 1 })
            .unwrap()
            .is_empty());
        let long = straight("r", 2, 0..20, 0.0);
        let s = window_sequences(&[t, long], WindowConfig { t_obs: 8, t_pred: 12, stride: 1 }).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].loss_mask, [false, true]);
    }

    #[test]
    fn empty_anchor_is_an_error() {
        let t = straight("r", 1, 0..3, 0.0);
        assert_eq!(build_window(&[&t], 10, 2, 2), Err(Error::EmptyWindow { anchor: 10 }));
    }

    #[test]
    fn normalization_examples() {
        let a = AgentTrack { frames: vec![Pose { frame: 0, x: 10.0, y: 10.0, heading: 0.3 }], ..straight("r", 1, 0..0, 0.0) };
        let b = AgentTrack { agent_id: 2, frames: vec![Pose { frame: 0, x: 14.0, y: 10.0, heading: -0.3 }], ..a.clone() };
        let s = build_window(&[&a, &b], 0, 1, 1).unwrap();
        let n = normalize_sample(&s);
        assert_eq!(n.anchor_position(0), [-2.0, 0.0]);
        assert_eq!(n.anchor_position(1), [2.0, 0.0]);
        assert_eq!(n.origin, [12.0, 10.0]);
        assert_eq!(n.obs.get(0, 2), 0.3);
        assert_eq!(normalize_sample(&n).obs, n.obs);
        assert_eq!(denormalize_sample(&n).obs, s.obs);
    }

    #[test]
    fn fraction_split_is_disjoint_and_deterministic() {
        let ids: Vec<String> = (0..10).map(|i| alloc::format!("rec{i}")).collect();
        let a = SplitProvenance::by_fraction(&ids, 1.0 / 3.0, 0.2, 4);
        let b = SplitProvenance::by_fraction(&ids, 1.0 / 3.0, 0.2, 4);
        assert_eq!(a, b);
        assert!(a.is_disjoint());
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (6, 1, 3));
        let one = SplitProvenance::by_fraction(&ids[..1], 1.0 / 3.0, 0.2, 4);
        assert_eq!(one.train.len(), 1);
    }

    #[test]
    fn explicit_split_rejects_overlap() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let p = SplitProvenance::explicit(&ids, &["b".into()], &["c".into()]).unwrap();
        assert_eq!(p.train, ["a"]);
        assert!(SplitProvenance::explicit(&ids, &["b".into()], &["b".into()]).is_err());
    }
}
