//! Scene graphs built at the anchor frame, and their block-diagonal batching.
//!
//! Each agent's observed history is flattened into its node feature vector, so
//! temporal structure reaches the network through the features and only the
//! spatial edges appear in the graph.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::traj::SequenceSample;

/// Neighbourhood radius in metres.
pub const DEFAULT_RADIUS: f64 = 20.0;

/// Distances are clamped to this before inversion, capping kernel weights at 10.
pub const MIN_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// 1 for every neighbour within the radius.
    Binary,
    /// Inverse Euclidean distance for neighbours within the radius.
    #[default]
    Kernel,
}

/// Undirected edge with `i <= j`; `i == j` is a self-loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    /// `(N, t_obs · C)`.
    pub node_features: Matrix,
    /// Symmetric `(N, N)`, self-loops on the diagonal.
    pub adjacency: Matrix,
    /// Self-loops first (one per node), then pairs in row-major order.
    pub edges: Vec<Edge>,
    pub anchor_positions: Vec<[f64; 2]>,
    pub mode: AdjacencyMode,
}

/// Flattens each agent's history time-major into one row. Unobserved frames
/// are already zero in the sample.
pub fn build_node_features(sample: &SequenceSample) -> Matrix {
    sample.obs.clone()
}

/// Scene graph for a sample at its anchor frame.
pub fn build_adjacency(sample: &SequenceSample, mode: AdjacencyMode, radius: f64) -> Result<SceneGraph> {
    let positions: Vec<[f64; 2]> = (0..sample.num_agents()).map(|i| sample.anchor_position(i)).collect();
    scene_graph(build_node_features(sample), positions, mode, radius)
}

/// Scene graph from explicit node features and anchor positions.
pub fn scene_graph(
    node_features: Matrix,
    positions: Vec<[f64; 2]>,
    mode: AdjacencyMode,
    radius: f64,
) -> Result<SceneGraph> {
    let n = positions.len();
    if node_features.rows() != n {
        return Err(Error::ShapeMismatch {
            op: "scene_graph",
            lhs: node_features.shape(),
            rhs: (n, 2),
        });
    }
    if let Some(node) = positions.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::NonFinitePosition { node });
    }
    let mut adjacency = Matrix::identity(n);
    let mut edges: Vec<Edge> = (0..n).map(|i| Edge { i, j: i, weight: 1.0 }).collect();
    for i in 0..n {
        for j in i + 1..n {
            let d = libm::hypot(positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]);
            if d <= radius {
                let w = match mode {
                    AdjacencyMode::Binary => 1.0,
                    AdjacencyMode::Kernel => 1.0 / d.max(MIN_DISTANCE),
                };
                adjacency.set(i, j, w);
                adjacency.set(j, i, w);
                edges.push(Edge { i, j, weight: w });
            }
        }
    }
    Ok(SceneGraph {
        node_features,
        adjacency,
        edges,
        anchor_positions: positions,
        mode,
    })
}

impl SceneGraph {
    pub fn num_nodes(&self) -> usize {
        self.anchor_positions.len()
    }

    /// Spatial (non self-loop) edges.
    pub fn spatial_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.i != e.j)
    }

    /// Relabels nodes so that new node `k` is old node `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SceneGraph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let positions = perm.iter().map(|&p| self.anchor_positions[p]).collect();
        let features = self.node_features.select_rows(perm);
        let mut g = scene_graph(features, positions, self.mode, f64::INFINITY)?;
        // Rebuild adjacency and edges from the original weights so the radius
        // decision is not re-evaluated.
        g.adjacency = Matrix::from_fn(n, n, |r, c| self.adjacency.get(perm[r], perm[c]));
        g.edges = (0..n).map(|i| Edge { i, j: i, weight: 1.0 }).collect();
        for i in 0..n {
            for j in i + 1..n {
                let w = g.adjacency.get(i, j);
                if w > 0.0 {
                    g.edges.push(Edge { i, j, weight: w });
                }
            }
        }
        Ok(g)
    }

    /// Copy of the graph with edge weights replaced, keeping the topology.
    /// `weights` follows the order of `edges`.
    pub fn with_edge_weights(&self, weights: &[f64]) -> Result<SceneGraph> {
        if weights.len() != self.edges.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        let mut g = self.clone();
        for (e, &w) in g.edges.iter_mut().zip(weights) {
            e.weight = w;
            g.adjacency.set(e.i, e.j, w);
            g.adjacency.set(e.j, e.i, w);
        }
        Ok(g)
    }
}

/// `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A` (self-loops included).
pub fn degree_normalize(adjacency: &Matrix) -> Result<Matrix> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::ShapeMismatch {
            op: "degree_normalize",
            lhs: adjacency.shape(),
            rhs: (n, n),
        });
    }
    let mut degree = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = adjacency.row(i).iter().sum();
        if d <= 0.0 {
            return Err(Error::IsolatedNodeDegreeZero { node: i });
        }
        degree.push(d);
    }
    Ok(Matrix::from_fn(n, n, |r, c| adjacency.get(r, c) / libm::sqrt(degree[r] * degree[c])))
}

/// Message-passing edge `src → dst`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdge {
    pub dst: usize,
    pub src: usize,
    pub weight: f64,
    /// Index of the undirected edge this was expanded from.
    pub undirected: usize,
}

/// Several scene graphs composed block-diagonally: nodes are concatenated and
/// edges never cross scenes.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub node_features: Matrix,
    /// `(N, 2)` anchor positions.
    pub anchor: Matrix,
    /// Incoming edges of every node, self-loops included.
    pub edges: Vec<DirectedEdge>,
    /// Undirected edges with global node indices; weights are the inputs to
    /// the network.
    pub undirected: Vec<Edge>,
    /// Number of incoming edges per node (self-loop included).
    pub degree: Vec<usize>,
    pub scene_nodes: Vec<Range<usize>>,
    pub scene_edges: Vec<Range<usize>>,
}

impl GraphBatch {
    pub fn single(graph: &SceneGraph) -> Result<Self> {
        Self::from_graphs(&[graph])
    }

    pub fn from_graphs(graphs: &[&SceneGraph]) -> Result<Self> {
        let width = graphs.first().map_or(0, |g| g.node_features.cols());
        let mut feats = Vec::with_capacity(graphs.len());
        let mut anchor = Vec::new();
        let mut undirected = Vec::new();
        let mut scene_nodes = Vec::with_capacity(graphs.len());
        let mut scene_edges = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for g in graphs {
            if g.node_features.cols() != width {
                return Err(Error::ShapeMismatch {
                    op: "GraphBatch",
                    lhs: (0, width),
                    rhs: g.node_features.shape(),
                });
            }
            feats.push(&g.node_features);
            anchor.extend(g.anchor_positions.iter().flat_map(|p| [p[0], p[1]]));
            let e0 = undirected.len();
            undirected.extend(g.edges.iter().map(|e| Edge {
                i: e.i + offset,
                j: e.j + offset,
                weight: e.weight,
            }));
            scene_edges.push(e0..undirected.len());
            scene_nodes.push(offset..offset + g.num_nodes());
            offset += g.num_nodes();
        }
        let mut edges = Vec::with_capacity(undirected.len() * 2);
        let mut degree = vec![0; offset];
        for (k, e) in undirected.iter().enumerate() {
            edges.push(DirectedEdge {
                dst: e.i,
                src: e.j,
                weight: e.weight,
                undirected: k,
            });
            degree[e.i] += 1;
            if e.i != e.j {
                edges.push(DirectedEdge {
                    dst: e.j,
                    src: e.i,
                    weight: e.weight,
                    undirected: k,
                });
                degree[e.j] += 1;
            }
        }
        Ok(Self {
            node_features: Matrix::vstack(&feats)?,
            anchor: Matrix::from_vec(offset, 2, anchor)?,
            edges,
            undirected,
            degree,
            scene_nodes,
            scene_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.degree.len()
    }

    pub fn num_scenes(&self) -> usize {
        self.scene_nodes.len()
    }

    pub fn dst(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.dst).collect()
    }

    pub fn src(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.src).collect()
    }

    /// Undirected edge weights as an `(E, 1)` column.
    pub fn undirected_weights(&self) -> Matrix {
        Matrix::from_fn(self.undirected.len(), 1, |r, _| self.undirected[r].weight)
    }

    /// Spatial pairs `(i, j)` of one scene, global indices.
    pub fn scene_pairs(&self, scene: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.undirected[self.scene_edges[scene].clone()]
            .iter()
            .filter(|e| e.i != e.j)
            .map(|e| (e.i, e.j))
    }
}
