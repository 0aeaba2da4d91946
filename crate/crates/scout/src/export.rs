//! Interaction-graph export for external renderers: nodes at anchor
//! positions, edge thickness proportional to the chosen score.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scout_core::attribution::{AttributionResult, AttributionTarget, EdgeAttribution};
use scout_core::graph::SceneGraph;
use scout_core::Error as CoreError;

use crate::error::{Error, Result};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// Maximum rendered edge thickness.
pub const MAX_THICKNESS: f64 = 8.0;

/// JSON Schema of [`GraphExport`].
pub const GRAPH_JSON_SCHEMA: &str = include_str!("../schema/interaction_graph.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Json,
    Dot,
}

/// Which per-edge score drives the thickness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeScore {
    /// Absolute integrated-gradients score.
    IntegratedGradients,
    /// Largest attention coefficient over layers, heads and directions.
    Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    #[serde(flatten)]
    pub attribution: EdgeAttribution,
    /// In `[0, MAX_THICKNESS]`; the strongest edge gets the maximum.
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub schema_version: u32,
    pub target: AttributionTarget,
    pub baseline: String,
    pub n_steps: usize,
    pub target_input: f64,
    pub target_baseline: f64,
    pub completeness_gap: f64,
    pub score: EdgeScore,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

fn edge_score(e: &EdgeAttribution, score: EdgeScore) -> f64 {
    match score {
        EdgeScore::IntegratedGradients => e.ig_score.abs(),
        EdgeScore::Attention => e.attention.iter().map(|a| a.alpha).fold(0.0, f64::max),
    }
}

impl GraphExport {
    pub fn new(graph: &SceneGraph, result: &AttributionResult, score: EdgeScore) -> Result<Self> {
        let n = graph.num_nodes();
        for e in &result.edges {
            let known = graph.spatial_edges().any(|g| g.i == e.i && g.j == e.j);
            if !known || e.i >= n || e.j >= n {
                return Err(CoreError::SchemaMismatch(format!(
                    "attribution edge ({}, {}) is not an edge of the scene graph",
                    e.i, e.j
                ))
                .into());
            }
        }
        let max = result.edges.iter().map(|e| edge_score(e, score)).fold(0.0, f64::max);
        Ok(Self {
            schema_version: GRAPH_SCHEMA_VERSION,
            target: result.target,
            baseline: result.baseline_spec.clone(),
            n_steps: result.n_steps,
            target_input: result.target_input,
            target_baseline: result.target_baseline,
            completeness_gap: result.completeness_gap,
            score,
            nodes: graph
                .anchor_positions
                .iter()
                .enumerate()
                .map(|(id, p)| GraphNode { id, x: p[0], y: p[1] })
                .collect(),
            edges: result
                .edges
                .iter()
                .map(|e| GraphEdge {
                    attribution: e.clone(),
                    thickness: if max > 0.0 { MAX_THICKNESS * edge_score(e, score) / max } else { 0.0 },
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("graph export serialises");
        s.push('\n');
        s
    }

    /// Undirected DOT graph with pinned node positions.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph interactions {\n  node [shape=circle];\n");
        for n in &self.nodes {
            let _ = writeln!(s, "  {} [pos=\"{:.4},{:.4}!\"];", n.id, n.x, n.y);
        }
        for e in &self.edges {
            let a = &e.attribution;
            let _ = writeln!(
                s,
                "  {} -- {} [penwidth={:.4}, label=\"{:.6}\", weight={:.6}];",
                a.i, a.j, e.thickness, a.ig_score, a.weight
            );
        }
        s.push_str("}\n");
        s
    }
}

/// Writes `graph` with `result`'s edge scores to `path`.
pub fn export_interaction_graph(
    graph: &SceneGraph,
    result: &AttributionResult,
    path: &Path,
    format: ExportFormat,
    score: EdgeScore,
) -> Result<()> {
    let export = GraphExport::new(graph, result, score)?;
    let text = match format {
        ExportFormat::Json => export.to_json(),
        ExportFormat::Dot => export.to_dot(),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
