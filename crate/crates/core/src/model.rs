//! The forecasting network: node/edge embedding, two graph layers in one of
//! four aggregation variants, and a per-node feed-forward head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::numerics::{
    affine, dropout, kaiming_init, linear, seeded_rng, Activation, Bindings, Matrix, Param, ParamStore, SeededRng,
    Tape, Var, DEFAULT_LEAKY_SLOPE,
};

/// Neighbourhood aggregation used by both graph layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Messages scaled by the fixed inverse-distance kernel.
    FixedWeight,
    /// Multi-head attention over incoming edges.
    Attention,
    /// Normalised sigmoid gates computed from evolving edge features.
    Gated,
    /// Isotropic symmetric-normalised convolution.
    PlainGcn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::FixedWeight, Variant::Attention, Variant::Gated, Variant::PlainGcn];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FixedWeight => "fixed_weight",
            Variant::Attention => "attention",
            Variant::Gated => "gated",
            Variant::PlainGcn => "plain_gcn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// The head emits positions directly.
    Positions,
    /// The head emits per-step displacements, integrated from the anchor position.
    Velocities,
}

/// How the attention heads of one layer are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMerge {
    Concat,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Width of the flattened node history (`t_obs · C`).
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    /// Width of the embedded edge feature for the attention variant.
    pub edge_dim: usize,
    pub use_residual_connection: bool,
    pub use_residual_weight: bool,
    pub use_final_fc: bool,
    pub dropout_p: f64,
    pub attention_dropout_p: f64,
    pub output_mode: OutputMode,
    pub t_pred: usize,
    pub activation: Activation,
    pub leaky_slope: f64,
    pub head_merge: [HeadMerge; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Attention,
            input_dim: 8 * crate::traj::FEATURES,
            hidden_dim: 48,
            num_heads: 3,
            edge_dim: 8,
            use_residual_connection: true,
            use_residual_weight: true,
            use_final_fc: true,
            dropout_p: 0.25,
            attention_dropout_p: 0.6,
            output_mode: OutputMode::Positions,
            t_pred: 12,
            activation: Activation::Relu,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            head_merge: [HeadMerge::Concat, HeadMerge::Mean],
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.t_pred == 0 {
            return bad("input_dim, hidden_dim and t_pred must be positive".into());
        }
        if self.num_heads == 0 {
            return bad("num_heads must be positive".into());
        }
        match self.variant {
            Variant::Attention => {
                if self.edge_dim == 0 {
                    return bad("edge_dim must be positive".into());
                }
                if self.head_merge.contains(&HeadMerge::Concat) && self.hidden_dim % self.num_heads != 0 {
                    return bad(format!(
                        "hidden_dim {} is not divisible by num_heads {}",
                        self.hidden_dim, self.num_heads
                    ));
                }
            }
            _ if self.num_heads != 1 => {
                return bad(format!("variant {} supports a single head", self.variant.name()));
            }
            _ => {}
        }
        for p in [self.dropout_p, self.attention_dropout_p] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("dropout probability {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    fn head_dim(&self, layer: usize) -> usize {
        match self.head_merge[layer] {
            HeadMerge::Concat => self.hidden_dim / self.num_heads,
            HeadMerge::Mean => self.hidden_dim,
        }
    }

    fn edge_width(&self) -> Option<usize> {
        match self.variant {
            Variant::Attention => Some(self.edge_dim),
            Variant::Gated => Some(self.hidden_dim),
            _ => None,
        }
    }

    /// Every parameter as `(name, rows, cols, fan_in)`; `fan_in == 0` marks a
    /// zero-initialised bias.
    pub fn param_specs(&self) -> Vec<(String, usize, usize, usize)> {
        let d = self.hidden_dim;
        let mut specs = vec![
            ("embed.w".into(), self.input_dim, d, self.input_dim),
            ("embed.b".into(), 1, d, 0),
        ];
        if let Some(de) = self.edge_width() {
            specs.push(("edge.w".into(), 1, de, 1));
            specs.push(("edge.b".into(), 1, de, 0));
        }
        for l in 0..2 {
            let p = |s: &str| format!("layer{l}.{s}");
            match self.variant {
                Variant::PlainGcn | Variant::FixedWeight => {
                    specs.push((p("w"), d, d, d));
                    if self.use_residual_weight {
                        specs.push((p("w_self"), d, d, d));
                    }
                }
                Variant::Attention => {
                    let dh = self.head_dim(l);
                    for k in 0..self.num_heads {
                        let h = |s: &str| format!("layer{l}.head{k}.{s}");
                        specs.push((h("w"), d, dh, d));
                        specs.push((h("a_dst"), dh, 1, dh));
                        specs.push((h("a_src"), dh, 1, dh));
                        specs.push((h("a_edge"), self.edge_dim, 1, self.edge_dim));
                    }
                    if self.use_residual_weight {
                        specs.push((p("w_self"), d, d, d));
                    }
                }
                Variant::Gated => {
                    if self.use_residual_weight {
                        specs.push((p("a"), d, d, d));
                    }
                    for s in ["b", "c", "d", "e"] {
                        specs.push((p(s), d, d, d));
                    }
                }
            }
        }
        let out = 2 * self.t_pred;
        if self.use_final_fc {
            specs.push(("head.w1".into(), d, d, d));
            specs.push(("head.b1".into(), 1, d, 0));
            specs.push(("head.w2".into(), d, out, d));
            specs.push(("head.b2".into(), 1, out, 0));
        } else {
            specs.push(("head.w".into(), d, out, d));
            specs.push(("head.b".into(), 1, out, 0));
        }
        specs
    }
}

/// Configuration plus learnable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Handles into the tape for one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `(N, 2 · t_pred)`, rows `[x_1, y_1, x_2, y_2, …]`.
    pub prediction: Var,
    /// Undirected edge-weight input `(E_u, 1)`.
    pub edge_weights: Var,
    /// Attention coefficients per layer and head, `(E, 1)` over the batch's
    /// directed edges, before attention dropout.
    pub attention: Vec<Vec<Var>>,
    /// Normalised gates per layer, `(E, hidden)`.
    pub gates: Vec<Var>,
}

impl Model {
    /// Kaiming-initialised weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let mut params = ParamStore::new();
        for (name, rows, cols, fan_in) in config.param_specs() {
            let p = if fan_in == 0 {
                Param::new(name, Matrix::zeros(rows, cols))
            } else {
                kaiming_init(name, rows, cols, fan_in, &mut rng)?
            };
            params.insert(p)?;
        }
        Ok(Self { config, params })
    }

    /// Wraps existing parameters, checking names and shapes against the config.
    pub fn from_parts(config: ModelConfig, mut params: ParamStore) -> Result<Self> {
        config.validate()?;
        params.reindex();
        let specs = config.param_specs();
        if specs.len() != params.len() {
            return Err(Error::SchemaMismatch(format!(
                "config expects {} parameters, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (name, rows, cols, _) in specs {
            let p = params.get(&name).ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if p.value.shape() != (rows, cols) {
                return Err(Error::SchemaMismatch(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    p.value.shape(),
                    (rows, cols)
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, training: bool, rng: &mut SeededRng) -> Result<ForwardPass> {
        let p = self.params.bind(tape);
        self.forward_bound(tape, &p, batch, training, rng)
    }

    /// Forward pass over parameters already bound to `tape`, so the caller
    /// can read their gradients.
    pub fn forward_bound(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        batch: &GraphBatch,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<ForwardPass> {
        let w = tape.leaf(batch.undirected_weights());
        self.forward_inner(tape, p, batch, w, training, rng)
    }

    /// Forward pass with the undirected edge weights supplied as a tape node,
    /// so gradients with respect to them are available.
    pub fn forward_with_weights(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        edge_weights: Var,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<ForwardPass> {
        let p = self.params.bind(tape);
        self.forward_inner(tape, &p, batch, edge_weights, training, rng)
    }

    fn forward_inner(
        &self,
        tape: &mut Tape,
        p: &Bindings,
        batch: &GraphBatch,
        edge_weights: Var,
        training: bool,
        rng: &mut SeededRng,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        if batch.node_features.cols() != cfg.input_dim {
            return Err(Error::ShapeMismatch {
                op: "model input",
                lhs: batch.node_features.shape(),
                rhs: (batch.num_nodes(), cfg.input_dim),
            });
        }
        if tape.value(edge_weights).shape() != (batch.undirected.len(), 1) {
            return Err(Error::ShapeMismatch {
                op: "edge weights",
                lhs: tape.value(edge_weights).shape(),
                rhs: (batch.undirected.len(), 1),
            });
        }
        let directed_w = directed_weights(tape, batch, edge_weights)?;

        let x = tape.leaf(batch.node_features.clone());
        let (mut h, mut edge_h) = embed(tape, p, cfg, x, directed_w)?;
        h = dropout(tape, h, cfg.dropout_p, training, rng)?;

        let mut attention = Vec::new();
        let mut gates = Vec::new();
        for l in 0..2 {
            let out = graph_layer(tape, p, cfg, l, h, edge_h, directed_w, batch, training, rng)?;
            attention.extend(out.attention);
            gates.extend(out.gates);
            edge_h = out.edge_h;
            h = dropout(tape, out.h, cfg.dropout_p, training, rng)?;
        }

        let raw = feed_forward_head(tape, p, cfg, h)?;
        let prediction = match cfg.output_mode {
            OutputMode::Positions => raw,
            OutputMode::Velocities => integrate_velocities(tape, raw, &batch.anchor, cfg.t_pred)?,
        };
        Ok(ForwardPass {
            prediction,
            edge_weights,
            attention,
            gates,
        })
    }

    /// Evaluation-mode predictions `(N, 2 · t_pred)`.
    pub fn predict(&self, batch: &GraphBatch) -> Result<Matrix> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, batch, false, &mut seeded_rng(0))?;
        Ok(tape.value(fwd.prediction).clone())
    }
}

/// Index vectors over a batch's directed edges.
struct EdgeIndex {
    n: usize,
    dst: Vec<usize>,
    src: Vec<usize>,
}

impl EdgeIndex {
    pub fn new(batch: &GraphBatch) -> Self {
        Self {
            n: batch.num_nodes(),
            dst: batch.dst(),
            src: batch.src(),
        }
    }
}

/// Output of one graph layer.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub h: Var,
    pub edge_h: Option<Var>,
    pub attention: Option<Vec<Var>>,
    pub gates: Option<Var>,
}

/// Expands `(E_u, 1)` undirected weights to the batch's directed edges.
pub fn directed_weights(tape: &mut Tape, batch: &GraphBatch, undirected: Var) -> Result<Var> {
    let idx: Vec<usize> = batch.edges.iter().map(|e| e.undirected).collect();
    tape.gather(undirected, &idx)
}

/// One graph layer (`layer` is 0 or 1): variant-specific aggregation, the
/// activation, then the residual connection when enabled. `directed_w` holds
/// the per-directed-edge weights.
#[allow(clippy::too_many_arguments)]
pub fn graph_layer(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    layer: usize,
    h: Var,
    edge_h: Option<Var>,
    directed_w: Var,
    batch: &GraphBatch,
    training: bool,
    rng: &mut SeededRng,
) -> Result<LayerOutput> {
    let ctx = EdgeIndex::new(batch);
    let missing = || Error::InvalidArgument(format!("variant {} needs edge features", cfg.variant.name()));
    let mut out = LayerOutput {
        h,
        edge_h,
        attention: None,
        gates: None,
    };
    let pre = match cfg.variant {
        Variant::PlainGcn => gcn_aggregate(tape, p, cfg, layer, h, directed_w, &ctx)?,
        Variant::FixedWeight => fixed_weight_aggregate(tape, p, cfg, layer, h, directed_w, &ctx, batch)?,
        Variant::Attention => {
            let e = edge_h.ok_or_else(missing)?;
            let (agg, alphas) = attention_aggregate(tape, p, cfg, layer, h, e, &ctx, training, rng)?;
            out.attention = Some(alphas);
            agg
        }
        Variant::Gated => {
            let e = edge_h.ok_or_else(missing)?;
            let (agg, eta, e_next) = gated_aggregate(tape, p, cfg, layer, h, e, &ctx)?;
            out.gates = Some(eta);
            out.edge_h = Some(e_next);
            agg
        }
    };
    let act = cfg.activation.apply(tape, pre);
    out.h = if cfg.use_residual_connection { tape.add(h, act)? } else { act };
    Ok(out)
}

/// Node embedding `act(X W + b)` and, for the attention and gated variants,
/// the edge embedding `act(e w + b)` of the scalar edge weights.
pub fn embed(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    x: Var,
    directed_w: Var,
) -> Result<(Var, Option<Var>)> {
    let h = affine(tape, x, p.var("embed.w")?, p.var("embed.b")?)?;
    let h = cfg.activation.apply(tape, h);
    let e = match cfg.edge_width() {
        Some(_) => {
            let e = affine(tape, directed_w, p.var("edge.w")?, p.var("edge.b")?)?;
            Some(cfg.activation.apply(tape, e))
        }
        None => None,
    };
    Ok((h, e))
}

fn residual_weight(tape: &mut Tape, p: &Bindings, l: usize, h: Var, agg: Var) -> Result<Var> {
    let ego = linear(tape, h, p.var(&format!("layer{l}.w_self"))?)?;
    tape.add(agg, ego)
}

/// `D^{-1/2} A D^{-1/2} H W` with the weighted degree computed on the tape.
fn gcn_aggregate(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    l: usize,
    h: Var,
    w: Var,
    ctx: &EdgeIndex,
) -> Result<Var> {
    let hw = linear(tape, h, p.var(&format!("layer{l}.w"))?)?;
    let deg = tape.scatter_add(w, &ctx.dst, ctx.n)?;
    let inv = tape.rsqrt(deg);
    let inv_dst = tape.gather(inv, &ctx.dst)?;
    let inv_src = tape.gather(inv, &ctx.src)?;
    let coef = tape.mul(w, inv_dst)?;
    let coef = tape.mul(coef, inv_src)?;
    let msgs = tape.gather(hw, &ctx.src)?;
    let msgs = tape.mul_col(msgs, coef)?;
    let agg = tape.scatter_add(msgs, &ctx.dst, ctx.n)?;
    if cfg.use_residual_weight {
        residual_weight(tape, p, l, h, agg)
    } else {
        Ok(agg)
    }
}

/// `Σ_j e_ij W h_j / (c_ij + 1)` with `c_ij = sqrt(|N(i)|)·sqrt(|N(j)|)`.
/// With the residual weight the ego node leaves the sum and enters through
/// `W_self` instead.
#[allow(clippy::too_many_arguments)]
fn fixed_weight_aggregate(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    l: usize,
    h: Var,
    w: Var,
    ctx: &EdgeIndex,
    batch: &GraphBatch,
) -> Result<Var> {
    let hw = linear(tape, h, p.var(&format!("layer{l}.w"))?)?;
    let keep: Vec<usize> = (0..ctx.dst.len())
        .filter(|&k| !cfg.use_residual_weight || ctx.dst[k] != ctx.src[k])
        .collect();
    let dst: Vec<usize> = keep.iter().map(|&k| ctx.dst[k]).collect();
    let src: Vec<usize> = keep.iter().map(|&k| ctx.src[k]).collect();
    let norm = Matrix::from_fn(keep.len(), 1, |r, _| {
        let c = libm::sqrt(batch.degree[dst[r]] as f64) * libm::sqrt(batch.degree[src[r]] as f64);
        1.0 / (c + 1.0)
    });
    let e = tape.gather(w, &keep)?;
    let coef = tape.mul_const(e, norm)?;
    let msgs = tape.gather(hw, &src)?;
    let msgs = tape.mul_col(msgs, coef)?;
    let agg = tape.scatter_add(msgs, &dst, ctx.n)?;
    if cfg.use_residual_weight {
        residual_weight(tape, p, l, h, agg)
    } else {
        Ok(agg)
    }
}

/// Per head: `α_ij = softmax_j(LeakyReLU(a·[W h_i ‖ W h_j ‖ e_ij]))`,
/// aggregate `Σ_j α_ij W h_j`; heads merged by concatenation or mean.
#[allow(clippy::too_many_arguments)]
fn attention_aggregate(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    l: usize,
    h: Var,
    edge_h: Var,
    ctx: &EdgeIndex,
    training: bool,
    rng: &mut SeededRng,
) -> Result<(Var, Vec<Var>)> {
    let mut heads = Vec::with_capacity(cfg.num_heads);
    let mut alphas = Vec::with_capacity(cfg.num_heads);
    for k in 0..cfg.num_heads {
        let name = |s: &str| format!("layer{l}.head{k}.{s}");
        let hw = linear(tape, h, p.var(&name("w"))?)?;
        let s_dst = tape.matmul(hw, p.var(&name("a_dst"))?)?;
        let s_src = tape.matmul(hw, p.var(&name("a_src"))?)?;
        let s_edge = tape.matmul(edge_h, p.var(&name("a_edge"))?)?;
        let s_dst = tape.gather(s_dst, &ctx.dst)?;
        let s_src = tape.gather(s_src, &ctx.src)?;
        let score = tape.add(s_dst, s_src)?;
        let score = tape.add(score, s_edge)?;
        let score = tape.leaky_relu(score, cfg.leaky_slope);
        let alpha = tape.segment_softmax(score, &ctx.dst)?;
        alphas.push(alpha);
        let alpha = dropout(tape, alpha, cfg.attention_dropout_p, training, rng)?;
        let msgs = tape.gather(hw, &ctx.src)?;
        let msgs = tape.mul_col(msgs, alpha)?;
        heads.push(tape.scatter_add(msgs, &ctx.dst, ctx.n)?);
    }
    let merged = match cfg.head_merge[l] {
        HeadMerge::Concat => tape.concat_cols(&heads)?,
        HeadMerge::Mean => tape.mean(&heads)?,
    };
    let out = if cfg.use_residual_weight {
        residual_weight(tape, p, l, h, merged)?
    } else {
        merged
    };
    Ok((out, alphas))
}

/// `A h_i + Σ_j η_ij ∘ B h_j` with `η_ij = σ(e_ij) / Σ_k σ(e_ik)`, plus the
/// edge update `e_ij + ReLU(C e_ij + D h_j + E h_i)`.
fn gated_aggregate(
    tape: &mut Tape,
    p: &Bindings,
    cfg: &ModelConfig,
    l: usize,
    h: Var,
    edge_h: Var,
    ctx: &EdgeIndex,
) -> Result<(Var, Var, Var)> {
    let name = |s: &str| format!("layer{l}.{s}");
    let sig = tape.sigmoid(edge_h);
    let denom = tape.scatter_add(sig, &ctx.dst, ctx.n)?;
    let inv = tape.recip(denom);
    let inv = tape.gather(inv, &ctx.dst)?;
    let eta = tape.mul(sig, inv)?;
    let bh = linear(tape, h, p.var(&name("b"))?)?;
    let bh = tape.gather(bh, &ctx.src)?;
    let msgs = tape.mul(eta, bh)?;
    let mut agg = tape.scatter_add(msgs, &ctx.dst, ctx.n)?;
    if cfg.use_residual_weight {
        let ah = linear(tape, h, p.var(&name("a"))?)?;
        agg = tape.add(ah, agg)?;
    }

    let ce = linear(tape, edge_h, p.var(&name("c"))?)?;
    let dh = linear(tape, h, p.var(&name("d"))?)?;
    let dh = tape.gather(dh, &ctx.src)?;
    let eh = linear(tape, h, p.var(&name("e"))?)?;
    let eh = tape.gather(eh, &ctx.dst)?;
    let upd = tape.add(ce, dh)?;
    let upd = tape.add(upd, eh)?;
    let upd = tape.relu(upd);
    let e_next = tape.add(edge_h, upd)?;
    Ok((agg, eta, e_next))
}

/// Per-node map to `2 · t_pred` outputs; two layers when the final FC is on.
pub fn feed_forward_head(tape: &mut Tape, p: &Bindings, cfg: &ModelConfig, h: Var) -> Result<Var> {
    if cfg.use_final_fc {
        let z = affine(tape, h, p.var("head.w1")?, p.var("head.b1")?)?;
        let z = cfg.activation.apply(tape, z);
        affine(tape, z, p.var("head.w2")?, p.var("head.b2")?)
    } else {
        affine(tape, h, p.var("head.w")?, p.var("head.b")?)
    }
}

/// Positions from per-step displacements: `anchor + cumulative sum`.
fn integrate_velocities(tape: &mut Tape, raw: Var, anchor: &Matrix, t_pred: usize) -> Result<Var> {
    let width = 2 * t_pred;
    let cumsum = Matrix::from_fn(width, width, |r, c| {
        if r % 2 == c % 2 && r / 2 <= c / 2 {
            1.0
        } else {
            0.0
        }
    });
    let cumsum = tape.leaf(cumsum);
    let steps = tape.matmul(raw, cumsum)?;
    let start = tape.leaf(Matrix::from_fn(anchor.rows(), width, |r, c| anchor.get(r, c % 2)));
    tape.add(start, steps)
}
