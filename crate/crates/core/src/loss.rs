//! Training objective and evaluation metrics.
//!
//! The loss is a per-coordinate Huber error summed over x and y, averaged over
//! loss-eligible agents and over the horizon, scaled by `1 + α·p_overlap`,
//! plus `β` times the final-step term. `p_overlap` is the fraction of
//! (connected pair, step) slots whose predicted segments intersect; it is a
//! detached scalar per scene.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBatch, MIN_DISTANCE};
use crate::numerics::{Matrix, Tape, Var};
use crate::traj::AgentType;

/// Class weights for vehicles, pedestrians and bicycles in WSADE / WSFDE.
pub const CLASS_WEIGHTS: [f64; 3] = [0.20, 0.58, 0.22];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Huber boundary in metres.
    pub delta: f64,
    /// Weight of the overlap penalty.
    pub alpha: f64,
    /// Weight of the final-step term.
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta: 1.0,
            alpha: 5.0,
            beta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "loss config needs delta > 0, alpha >= 0, beta >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Huber value of a single error `e`.
pub fn huber(e: f64, delta: f64) -> f64 {
    crate::numerics::huber_value(e, delta)
}

/// Mean Huber value over all coordinates of `y − y_hat`.
pub fn huber_mean(y: &Matrix, y_hat: &Matrix, delta: f64) -> Result<f64> {
    let diff = y.zip_map(y_hat, |a, b| a - b)?;
    if diff.is_empty() {
        return Ok(0.0);
    }
    Ok(diff.as_slice().iter().map(|&e| huber(e, delta)).sum::<f64>() / diff.len() as f64)
}

type Point = [f64; 2];

#[inline]
fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
fn within_box(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn dist(a: Point, b: Point) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

/// Length below which a segment is treated as a point.
pub const DEGENERATE_LENGTH: f64 = 1e-12;

/// Closed-segment intersection via orientation signs: the side function of
/// one segment changes sign across the other's endpoints (and vice versa)
/// exactly when they cross. A zero-length segment only intersects when an
/// endpoint coincides with one of the other segment's endpoints within
/// [`MIN_DISTANCE`].
pub fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    if dist(p1, p2) < DEGENERATE_LENGTH || dist(q1, q2) < DEGENERATE_LENGTH {
        return [p1, p2]
            .iter()
            .any(|&a| [q1, q2].iter().any(|&b| dist(a, b) <= MIN_DISTANCE));
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && within_box(q1, q2, p1))
        || (d2 == 0.0 && within_box(q1, q2, p2))
        || (d3 == 0.0 && within_box(p1, p2, q1))
        || (d4 == 0.0 && within_box(p1, p2, q2))
}

/// Intersecting and total (pair, step) slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCount {
    pub hits: usize,
    pub slots: usize,
}

impl OverlapCount {
    pub fn fraction(self) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            self.hits as f64 / self.slots as f64
        }
    }

    pub fn merge(self, other: OverlapCount) -> OverlapCount {
        OverlapCount {
            hits: self.hits + other.hits,
            slots: self.slots + other.slots,
        }
    }
}

fn point(pred: &Matrix, node: usize, t: usize) -> Point {
    [pred.get(node, 2 * t), pred.get(node, 2 * t + 1)]
}

/// Counts, for every connected pair and every consecutive step pair, whether
/// the two agents' predicted segments intersect. `pred` is `(N, 2·t_pred)`.
pub fn overlap_count(pred: &Matrix, pairs: impl IntoIterator<Item = (usize, usize)>) -> OverlapCount {
    let steps = pred.cols() / 2;
    let mut count = OverlapCount::default();
    for (i, j) in pairs {
        for t in 0..steps.saturating_sub(1) {
            count.slots += 1;
            if segments_intersect(point(pred, i, t), point(pred, i, t + 1), point(pred, j, t), point(pred, j, t + 1)) {
                count.hits += 1;
            }
        }
    }
    count
}

/// Fraction of overlapping (pair, step) slots; 0 without pairs.
pub fn overlap_percentage(pred: &Matrix, pairs: impl IntoIterator<Item = (usize, usize)>) -> f64 {
    overlap_count(pred, pairs).fraction()
}

/// Per-scene overlap fractions of a batch's predictions.
pub fn scene_overlaps(pred: &Matrix, batch: &GraphBatch) -> Vec<f64> {
    (0..batch.num_scenes())
        .map(|s| overlap_percentage(pred, batch.scene_pairs(s)))
        .collect()
}

/// Result of [`total_loss`].
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: Var,
    /// Overlap fraction used for each scene.
    pub overlaps: Vec<f64>,
}

/// Composite loss over a batch, averaged over scenes that have at least one
/// eligible agent. Overlap fractions are measured on the current predictions.
pub fn total_loss(
    tape: &mut Tape,
    pred: Var,
    target: &Matrix,
    loss_mask: &[bool],
    batch: &GraphBatch,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    let overlaps = scene_overlaps(tape.value(pred), batch);
    total_loss_with_overlaps(tape, pred, target, loss_mask, batch, cfg, &overlaps)
}

/// [`total_loss`] with caller-provided overlap fractions (held fixed, e.g.
/// while probing with finite differences).
pub fn total_loss_with_overlaps(
    tape: &mut Tape,
    pred: Var,
    target: &Matrix,
    loss_mask: &[bool],
    batch: &GraphBatch,
    cfg: &LossConfig,
    overlaps: &[f64],
) -> Result<LossOutput> {
    cfg.validate()?;
    let (n, width) = tape.value(pred).shape();
    if target.shape() != (n, width) || loss_mask.len() != n || overlaps.len() != batch.num_scenes() {
        return Err(Error::ShapeMismatch {
            op: "total_loss",
            lhs: (n, width),
            rhs: target.shape(),
        });
    }
    let t_pred = width / 2;
    let scored: Vec<(usize, usize)> = batch
        .scene_nodes
        .iter()
        .enumerate()
        .map(|(s, r)| (s, r.clone().filter(|&i| loss_mask[i]).count()))
        .filter(|&(_, k)| k > 0)
        .collect();
    if scored.is_empty() {
        return Err(Error::NoEligibleNodes);
    }
    let scenes = scored.len() as f64;
    let mut weights = Matrix::zeros(n, width);
    for &(s, eligible) in &scored {
        let per_node = 1.0 / (scenes * eligible as f64);
        let step_w = (1.0 + cfg.alpha * overlaps[s]) / t_pred as f64;
        for i in batch.scene_nodes[s].clone().filter(|&i| loss_mask[i]) {
            for t in 0..t_pred {
                let mut w = step_w;
                if t + 1 == t_pred {
                    w += cfg.beta;
                }
                weights.set(i, 2 * t, per_node * w);
                weights.set(i, 2 * t + 1, per_node * w);
            }
        }
    }
    let y = tape.leaf(target.clone());
    let diff = tape.sub(pred, y)?;
    let h = tape.huber(diff, cfg.delta);
    let loss = tape.weighted_sum(h, weights)?;
    Ok(LossOutput {
        loss,
        overlaps: overlaps.to_vec(),
    })
}

fn displacement(pred: &Matrix, gt: &Matrix, i: usize, t: usize) -> f64 {
    libm::hypot(pred.get(i, 2 * t) - gt.get(i, 2 * t), pred.get(i, 2 * t + 1) - gt.get(i, 2 * t + 1))
}

fn check_metric_inputs(pred: &Matrix, gt: &Matrix, mask: &[bool]) -> Result<usize> {
    if pred.shape() != gt.shape() || mask.len() != pred.rows() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: pred.shape(),
            rhs: gt.shape(),
        });
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::NoEligibleNodes);
    }
    Ok(n)
}

/// Mean Euclidean displacement over eligible agents and every predicted step.
pub fn ade(pred: &Matrix, gt: &Matrix, mask: &[bool]) -> Result<f64> {
    let n = check_metric_inputs(pred, gt, mask)?;
    let steps = pred.cols() / 2;
    let total: f64 = (0..pred.rows())
        .filter(|&i| mask[i])
        .flat_map(|i| (0..steps).map(move |t| (i, t)))
        .map(|(i, t)| displacement(pred, gt, i, t))
        .sum();
    Ok(total / (n * steps) as f64)
}

/// Mean Euclidean displacement at the final predicted step.
pub fn fde(pred: &Matrix, gt: &Matrix, mask: &[bool]) -> Result<f64> {
    let n = check_metric_inputs(pred, gt, mask)?;
    let last = pred.cols() / 2 - 1;
    let total: f64 = (0..pred.rows())
        .filter(|&i| mask[i])
        .map(|i| displacement(pred, gt, i, last))
        .sum();
    Ok(total / n as f64)
}

/// Class-weighted sum of per-class metrics ordered vehicle, pedestrian,
/// bicycle.
pub fn weighted_sum_metric(per_class: [Option<f64>; 3]) -> Result<f64> {
    let mut total = 0.0;
    for (ty, (m, w)) in AgentType::ALL.iter().zip(per_class.iter().zip(CLASS_WEIGHTS)) {
        total += w * m.ok_or(Error::MissingClass(ty.name()))?;
    }
    Ok(total)
}

pub fn wsade(per_class_ade: [Option<f64>; 3]) -> Result<f64> {
    weighted_sum_metric(per_class_ade)
}

pub fn wsfde(per_class_fde: [Option<f64>; 3]) -> Result<f64> {
    weighted_sum_metric(per_class_fde)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub agent_type: AgentType,
    pub agents: usize,
    pub ade: f64,
    pub fde: f64,
}

/// Aggregate evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Present only when all three classes were evaluated.
    pub wsade: Option<f64>,
    pub wsfde: Option<f64>,
    pub overlap_rate: f64,
    pub scenes: usize,
    pub agents: usize,
}

/// Associative accumulator of displacement sums and overlap counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricAccumulator {
    ade_sum: [f64; 3],
    ade_steps: [usize; 3],
    fde_sum: [f64; 3],
    agents: [usize; 3],
    overlap: OverlapCount,
    scenes: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the eligible agents in `nodes` of a batch prediction.
    pub fn add(
        &mut self,
        pred: &Matrix,
        gt: &Matrix,
        mask: &[bool],
        types: &[AgentType],
        nodes: core::ops::Range<usize>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) {
        let steps = pred.cols() / 2;
        for i in nodes.filter(|&i| mask[i]) {
            let c = types[i].index();
            for t in 0..steps {
                self.ade_sum[c] += displacement(pred, gt, i, t);
            }
            self.ade_steps[c] += steps;
            self.fde_sum[c] += displacement(pred, gt, i, steps - 1);
            self.agents[c] += 1;
        }
        self.overlap = self.overlap.merge(overlap_count(pred, pairs));
        self.scenes += 1;
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        for c in 0..3 {
            self.ade_sum[c] += other.ade_sum[c];
            self.ade_steps[c] += other.ade_steps[c];
            self.fde_sum[c] += other.fde_sum[c];
            self.agents[c] += other.agents[c];
        }
        self.overlap = self.overlap.merge(other.overlap);
        self.scenes += other.scenes;
    }

    pub fn finish(&self) -> Result<MetricReport> {
        let agents: usize = self.agents.iter().sum();
        if agents == 0 {
            return Err(Error::NoEligibleNodes);
        }
        let steps: usize = self.ade_steps.iter().sum();
        let mut per_class = Vec::new();
        let mut ade_c = [None; 3];
        let mut fde_c = [None; 3];
        for ty in AgentType::ALL {
            let c = ty.index();
            if self.agents[c] > 0 {
                let a = self.ade_sum[c] / self.ade_steps[c] as f64;
                let f = self.fde_sum[c] / self.agents[c] as f64;
                ade_c[c] = Some(a);
                fde_c[c] = Some(f);
                per_class.push(ClassMetrics {
                    agent_type: ty,
                    agents: self.agents[c],
                    ade: a,
                    fde: f,
                });
            }
        }
        Ok(MetricReport {
            ade: self.ade_sum.iter().sum::<f64>() / steps as f64,
            fde: self.fde_sum.iter().sum::<f64>() / agents as f64,
            per_class,
            wsade: wsade(ade_c).ok(),
            wsfde: wsfde(fde_c).ok(),
            overlap_rate: self.overlap.fraction(),
            scenes: self.scenes,
            agents,
        })
    }
}

/// Evaluates a full batch prediction against its targets.
pub fn evaluate_batch(
    pred: &Matrix,
    gt: &Matrix,
    mask: &[bool],
    types: &[AgentType],
    batch: &GraphBatch,
) -> MetricAccumulator {
    let mut acc = MetricAccumulator::new();
    for s in 0..batch.num_scenes() {
        acc.add(pred, gt, mask, types, batch.scene_nodes[s].clone(), batch.scene_pairs(s));
    }
    acc
}

/// Builds an `(N, 2T)` matrix from per-agent `(x, y)` step lists.
pub fn trajectories(rows: &[Vec<Point>]) -> Result<Matrix> {
    let width = rows.first().map_or(0, |r| 2 * r.len());
    let mut data = vec![];
    for r in rows {
        if 2 * r.len() != width {
            return Err(Error::InvalidArgument("ragged trajectories".into()));
        }
        data.extend(r.iter().flat_map(|p| [p[0], p[1]]));
    }
    Matrix::from_vec(rows.len(), width, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{scene_graph, AdjacencyMode};

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 1.0), 0.0);
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(2.0, 1.0), 1.5);
        assert_eq!(huber(-2.0, 1.0), 1.5);
        let eps = 1e-9;
        assert!((huber(1.0 + eps, 1.0) - huber(1.0 - eps, 1.0)).abs() < 1e-8);
    }

    fn line(from: Point, step: Point, n: usize) -> Vec<Point> {
        (0..n).map(|t| [from[0] + step[0] * t as f64, from[1] + step[1] * t as f64]).collect()
    }

    #[test]
    fn parallel_trajectories_never_overlap() {
        let pred = trajectories(&[line([0.0, 0.0], [1.0, 0.0], 6), line([0.0, 5.0], [1.0, 0.0], 6)]).unwrap();
        assert_eq!(overlap_percentage(&pred, [(0, 1)]), 0.0);
    }

    #[test]
    fn crossing_at_one_step_is_one_fifth() {
        // Agent 0 moves right along y = 0, agent 1 moves down along x = 3.5;
        // they are both inside the unit square around (3.5, 0) only during step 3 -> 4.
        let a = line([0.0, 0.0], [1.0, 0.0], 6);
        let b = line([3.5, 3.5], [0.0, -1.0], 6);
        let pred = trajectories(&[a, b]).unwrap();
        assert_eq!(overlap_count(&pred, [(0, 1)]), OverlapCount { hits: 1, slots: 5 });
        assert!((overlap_percentage(&pred, [(0, 1)]) - 0.2).abs() < 1e-12);
        assert_eq!(overlap_percentage(&pred, core::iter::empty()), 0.0);
    }

    #[test]
    fn touching_and_collinear_segments() {
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 3.0]));
        assert!(segments_intersect([0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [3.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]));
        assert!(!segments_intersect([0.0, 0.0], [0.0, 0.0], [0.0, 0.5], [4.0, 4.0]));
        assert!(segments_intersect([0.0, 0.0], [0.0, 0.0], [0.0, 0.05], [4.0, 4.0]));
        assert!(segments_intersect([0.0, 0.0], [0.0, 0.0], [0.0, 0.05], [0.0, 0.05]));
    }

    fn two_node_batch() -> GraphBatch {
        let g = scene_graph(Matrix::zeros(2, 1), alloc::vec![[0.0, 0.0], [3.0, 0.0]], AdjacencyMode::Kernel, 20.0).unwrap();
        GraphBatch::single(&g).unwrap()
    }

    fn loss_value(pred: &Matrix, target: &Matrix, cfg: LossConfig, overlap: f64) -> f64 {
        let batch = two_node_batch();
        let mut tape = Tape::new();
        let p = tape.leaf(pred.clone());
        let out = total_loss_with_overlaps(&mut tape, p, target, &[true, true], &batch, &cfg, &[overlap]).unwrap();
        tape.value(out.loss).item()
    }

    #[test]
    fn total_loss_examples() {
        let target = Matrix::from_fn(2, 8, |r, c| (r * 8 + c) as f64 * 0.3);
        let cfg = LossConfig::default();
        assert_eq!(loss_value(&target, &target, cfg, 0.7), 0.0);

        let shifted = target.map(|v| v + 0.5);
        let plain = LossConfig { delta: 1.0, alpha: 0.0, beta: 0.0 };
        assert!((loss_value(&shifted, &target, plain, 0.0) - 0.25).abs() < 1e-15);

        let penalised = LossConfig { alpha: 5.0, ..plain };
        let ratio = loss_value(&shifted, &target, penalised, 0.2) / loss_value(&shifted, &target, plain, 0.2);
        assert!((ratio - 2.0).abs() < 1e-15);

        let fde_only = LossConfig { beta: 1.0, ..plain };
        assert!((loss_value(&shifted, &target, fde_only, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn total_loss_requires_eligible_nodes() {
        let batch = two_node_batch();
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::zeros(2, 4));
        assert!(matches!(
            total_loss(&mut tape, p, &Matrix::zeros(2, 4), &[false, false], &batch, &LossConfig::default()),
            Err(Error::NoEligibleNodes)
        ));
    }

    #[test]
    fn displacement_metric_examples() {
        let gt = trajectories(&[line([0.0, 0.0], [1.0, 1.0], 4)]).unwrap();
        assert_eq!(ade(&gt, &gt, &[true]).unwrap(), 0.0);
        assert_eq!(fde(&gt, &gt, &[true]).unwrap(), 0.0);
        let offset = gt.map(|v| v);
        let offset = Matrix::from_fn(1, 8, |r, c| offset.get(r, c) + if c % 2 == 0 { 1.0 } else { 0.0 });
        assert!((ade(&offset, &gt, &[true]).unwrap() - 1.0).abs() < 1e-15);
        assert!((fde(&offset, &gt, &[true]).unwrap() - 1.0).abs() < 1e-15);
        let mut last = gt.clone();
        last.set(0, 6, gt.get(0, 6) + 2.0);
        assert_eq!(ade(&last, &gt, &[true]).unwrap(), 0.5);
        assert_eq!(fde(&last, &gt, &[true]).unwrap(), 2.0);
        assert!(matches!(ade(&gt, &gt, &[false]), Err(Error::NoEligibleNodes)));
    }

    #[test]
    fn weighted_sum_examples() {
        assert!((wsade([Some(2.0), Some(1.0), Some(1.0)]).unwrap() - 1.20).abs() < 1e-12);
        assert_eq!(wsade([Some(0.0); 3]).unwrap(), 0.0);
        assert!((wsfde([Some(3.7); 3]).unwrap() - 3.7).abs() < 1e-12);
        assert_eq!(wsade([Some(1.0), None, Some(1.0)]), Err(Error::MissingClass("pedestrian")));
        assert!((CLASS_WEIGHTS.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn accumulator_is_associative() {
        let gt = trajectories(&[line([0.0, 0.0], [1.0, 0.0], 3), line([0.0, 1.0], [0.0, 1.0], 3)]).unwrap();
        let pred = gt.map(|v| v + 0.3);
        let types = [AgentType::Vehicle, AgentType::Pedestrian];
        let mask = [true, true];
        let mut whole = MetricAccumulator::new();
        whole.add(&pred, &gt, &mask, &types, 0..2, [(0, 1)]);
        let mut a = MetricAccumulator::new();
        a.add(&pred, &gt, &mask, &types, 0..1, [(0, 1)]);
        let mut b = MetricAccumulator::new();
        b.add(&pred, &gt, &mask, &types, 1..2, core::iter::empty());
        a.merge(&b);
        let (r1, r2) = (whole.finish().unwrap(), a.finish().unwrap());
        assert_eq!(r1.ade, r2.ade);
        assert_eq!(r1.per_class, r2.per_class);
        assert_eq!(r1.wsade, None);
    }
}
