//! Integrated gradients over edge weights and direct attention extraction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBatch, SceneGraph};
use crate::model::{Model, Variant};
use crate::numerics::{seeded_rng, Matrix, Tape, Var};

/// Default number of path points.
pub const DEFAULT_STEPS: usize = 128;

/// Scalar summary of the model output being explained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AttributionTarget {
    /// `Σ_t ‖ŷ_t − anchor‖²` of one node's predicted trajectory.
    SquaredDisplacement { node: usize },
    /// One predicted coordinate (`axis` 0 = x, 1 = y) at one step.
    Coordinate { node: usize, step: usize, axis: usize },
}

impl AttributionTarget {
    pub fn node(self) -> usize {
        match self {
            Self::SquaredDisplacement { node } | Self::Coordinate { node, .. } => node,
        }
    }

    fn build(self, tape: &mut Tape, pred: Var, anchor: &Matrix) -> Result<Var> {
        let (n, width) = tape.value(pred).shape();
        let node = self.node();
        if node >= n {
            return Err(Error::InvalidArgument(format!("target node {node} outside 0..{n}")));
        }
        match self {
            Self::SquaredDisplacement { .. } => {
                let origin = tape.leaf(Matrix::from_fn(n, width, |r, c| anchor.get(r, c % 2)));
                let d = tape.sub(pred, origin)?;
                let sq = tape.mul(d, d)?;
                tape.weighted_sum(sq, Matrix::from_fn(n, width, |r, _| if r == node { 1.0 } else { 0.0 }))
            }
            Self::Coordinate { step, axis, .. } => {
                let col = 2 * step + axis;
                if axis > 1 || col >= width {
                    return Err(Error::InvalidArgument(format!("target step {step} axis {axis} out of range")));
                }
                tape.weighted_sum(pred, Matrix::from_fn(n, width, |r, c| if r == node && c == col { 1.0 } else { 0.0 }))
            }
        }
    }
}

/// Path-integral attributions of a scalar function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgOutput {
    pub attributions: Vec<f64>,
    pub target_input: f64,
    pub target_baseline: f64,
    /// `|Σ attributions − (f(input) − f(baseline))|`.
    pub completeness_gap: f64,
}

impl IgOutput {
    /// Gap relative to `|f(input) − f(baseline)|`; zero when both vanish.
    pub fn relative_gap(&self) -> f64 {
        let delta = (self.target_input - self.target_baseline).abs();
        if delta == 0.0 {
            if self.completeness_gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.completeness_gap / delta
        }
    }
}

/// Integrated gradients by the midpoint rule: `(x − x')·(1/n)·Σ_k ∇f(x' +
/// ((k − ½)/n)(x − x'))`. `f` returns the value and gradient at a point.
pub fn integrated_gradients<F>(input: &[f64], baseline: &[f64], n_steps: usize, mut f: F) -> Result<IgOutput>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if input.len() != baseline.len() {
        return Err(Error::InvalidArgument(format!(
            "input has {} entries, baseline {}",
            input.len(),
            baseline.len()
        )));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be positive".into()));
    }
    let diff: Vec<f64> = input.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut sum = vec![0.0; input.len()];
    let mut point = vec![0.0; input.len()];
    for k in 0..n_steps {
        let s = (k as f64 + 0.5) / n_steps as f64;
        for (p, (b, d)) in point.iter_mut().zip(baseline.iter().zip(&diff)) {
            *p = b + s * d;
        }
        let (_, grad) = f(&point)?;
        if grad.len() != input.len() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonDifferentiableTarget { step: k });
        }
        for (acc, g) in sum.iter_mut().zip(&grad) {
            *acc += g;
        }
    }
    let attributions: Vec<f64> = sum.iter().zip(&diff).map(|(g, d)| d * g / n_steps as f64).collect();
    let target_input = f(input)?.0;
    let target_baseline = f(baseline)?.0;
    let total: f64 = attributions.iter().sum();
    Ok(IgOutput {
        completeness_gap: (total - (target_input - target_baseline)).abs(),
        attributions,
        target_input,
        target_baseline,
    })
}

/// Edge-weight assignment the path starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "weights")]
pub enum EdgeBaseline {
    /// Spatial edges at 0, self-loops kept at 1: the scene without interactions.
    NoInteraction,
    /// Explicit weights in the order of the graph's edges.
    Weights(Vec<f64>),
}

impl EdgeBaseline {
    pub fn weights(&self, graph: &SceneGraph) -> Result<Vec<f64>> {
        match self {
            EdgeBaseline::NoInteraction => Ok(graph.edges.iter().map(|e| if e.i == e.j { 1.0 } else { 0.0 }).collect()),
            EdgeBaseline::Weights(w) if w.len() == graph.edges.len() => Ok(w.clone()),
            EdgeBaseline::Weights(w) => Err(Error::InvalidArgument(format!(
                "baseline has {} weights for {} edges",
                w.len(),
                graph.edges.len()
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EdgeBaseline::NoInteraction => "spatial edge weights 0, self-loops 1".into(),
            EdgeBaseline::Weights(_) => "explicit edge weights".into(),
        }
    }
}

/// Attention coefficient of one head on one directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionValue {
    pub layer: usize,
    pub head: usize,
    /// Node doing the attending.
    pub dst: usize,
    pub src: usize,
    pub alpha: f64,
}

/// Attribution of one spatial edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttribution {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub ig_score: f64,
    /// Both directions of every head and layer; empty for non-attention
    /// variants.
    pub attention: Vec<AttentionValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub target: AttributionTarget,
    pub baseline_spec: String,
    pub n_steps: usize,
    pub edges: Vec<EdgeAttribution>,
    pub target_input: f64,
    pub target_baseline: f64,
    pub completeness_gap: f64,
}

impl AttributionResult {
    pub fn relative_gap(&self) -> f64 {
        IgOutput {
            attributions: Vec::new(),
            target_input: self.target_input,
            target_baseline: self.target_baseline,
            completeness_gap: self.completeness_gap,
        }
        .relative_gap()
    }
}

/// Target value and its gradient with respect to the undirected edge
/// weights, evaluation mode.
pub fn target_and_gradient(
    model: &Model,
    batch: &GraphBatch,
    weights: &[f64],
    target: AttributionTarget,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let w = tape.leaf(Matrix::from_vec(weights.len(), 1, weights.to_vec())?);
    let fwd = model.forward_with_weights(&mut tape, batch, w, false, &mut seeded_rng(0))?;
    let y = target.build(&mut tape, fwd.prediction, &batch.anchor)?;
    let value = tape.value(y).item();
    let grads = tape.backward(y)?;
    Ok((value, grads.wrt(w).into_vec()))
}

/// Integrated gradients of `target` with respect to every edge weight of
/// `graph`, reported for the spatial edges (self-loops keep their weight
/// under the default baseline and so receive exactly zero).
pub fn integrated_gradients_edges(
    model: &Model,
    graph: &SceneGraph,
    target: AttributionTarget,
    baseline: &EdgeBaseline,
    n_steps: usize,
) -> Result<AttributionResult> {
    let batch = GraphBatch::single(graph)?;
    let input: Vec<f64> = graph.edges.iter().map(|e| e.weight).collect();
    let base = baseline.weights(graph)?;
    let ig = integrated_gradients(&input, &base, n_steps, |w| target_and_gradient(model, &batch, w, target))?;
    let attention = match model.config.variant {
        Variant::Attention => extract_attention(model, graph)?.values,
        _ => Vec::new(),
    };
    let edges = graph
        .edges
        .iter()
        .zip(&ig.attributions)
        .filter(|(e, _)| e.i != e.j)
        .map(|(e, &score)| EdgeAttribution {
            i: e.i,
            j: e.j,
            weight: e.weight,
            ig_score: score,
            attention: attention
                .iter()
                .filter(|a| (a.dst == e.i && a.src == e.j) || (a.dst == e.j && a.src == e.i))
                .copied()
                .collect(),
        })
        .collect();
    Ok(AttributionResult {
        target,
        baseline_spec: baseline.describe(),
        n_steps,
        edges,
        target_input: ig.target_input,
        target_baseline: ig.target_baseline,
        completeness_gap: ig.completeness_gap,
    })
}

/// Attention coefficients captured from one evaluation forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMaps {
    /// Every layer, head and directed edge (self-loops included).
    pub values: Vec<AttentionValue>,
    /// The prediction of the same pass.
    pub prediction: Matrix,
}

/// Per-layer, per-head attention of an attention-variant model.
pub fn extract_attention(model: &Model, graph: &SceneGraph) -> Result<AttentionMaps> {
    if model.config.variant != Variant::Attention {
        return Err(Error::WrongVariant(model.config.variant.name()));
    }
    let batch = GraphBatch::single(graph)?;
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &batch, false, &mut seeded_rng(0))?;
    let mut values = Vec::new();
    for (layer, heads) in fwd.attention.iter().enumerate() {
        for (head, &alpha) in heads.iter().enumerate() {
            let a = tape.value(alpha);
            for (k, e) in batch.edges.iter().enumerate() {
                values.push(AttentionValue {
                    layer,
                    head,
                    dst: e.dst,
                    src: e.src,
                    alpha: a.get(k, 0),
                });
            }
        }
    }
    Ok(AttentionMaps {
        values,
        prediction: tape.value(fwd.prediction).clone(),
    })
}
