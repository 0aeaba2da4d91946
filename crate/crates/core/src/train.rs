//! Optimisation: AdamW, scene batching, the training loop with validation and
//! early stopping, evaluation, and the finite-difference gradient harness.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_adjacency, AdjacencyMode, GraphBatch, SceneGraph};
use crate::loss::{evaluate_batch, scene_overlaps, total_loss, total_loss_with_overlaps, LossConfig, MetricAccumulator, MetricReport};
use crate::model::{Model, ModelConfig, Variant};
use crate::numerics::gradcheck::relative_error;
use crate::numerics::{seeded_rng, Matrix, ParamStore, SeededRng, Tape};
use crate::synth::random_scene_graph;
use crate::traj::{
    normalize_sample, window_sequences, wrap_angle, AgentTrack, AgentType, SequenceSample, WindowConfig, FEATURES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Scenes per optimisation step.
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    /// Epochs without a validation ADE improvement before stopping.
    pub early_stop_patience: usize,
    /// Hard cap on optimisation steps across epochs.
    pub max_steps: Option<usize>,
    pub schedule: LrSchedule,
    /// Rotate every training scene by a fresh uniform angle at each step.
    pub augment_rotation: bool,
    pub seed: u64,
}

/// Learning-rate schedule over the planned number of steps (`max_steps` when
/// set, otherwise `max_epochs` full passes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to `min_lr`.
    Cosine { min_lr: f64 },
}

impl LrSchedule {
    pub fn lr_at(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { min_lr } => {
                let frac = if total == 0 { 1.0 } else { (step as f64 / total as f64).min(1.0) };
                min_lr + (base - min_lr) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * frac))
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 16,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 100,
            early_stop_patience: 10,
            max_steps: None,
            schedule: LrSchedule::Constant,
            augment_rotation: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.batch_size > 0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && match self.schedule {
                LrSchedule::Constant => true,
                LrSchedule::Cosine { min_lr } => (0.0..=self.lr).contains(&min_lr),
            };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "train config needs lr > 0, batch_size > 0, weight_decay >= 0, betas in [0, 1), eps > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// AdamW moments, aligned with the order of a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update from the gradients stored in `params`. Weight decay
/// shrinks each weight by `lr · wd` independently of the adaptive step.
/// Nothing is modified when any gradient is non-finite.
pub fn optimizer_step(params: &mut ParamStore, state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::InvalidArgument("optimizer state does not match parameters".into()));
    }
    if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let w = p.value.as_mut_slice();
        let g = p.grad.as_slice();
        let m = m.as_mut_slice();
        let v = v.as_mut_slice();
        for k in 0..w.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            w[k] = w[k] * decay - cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}

/// A prepared scene: graph, normalised targets, loss mask and agent types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub graph: SceneGraph,
    /// `(N, 2 · t_pred)` future positions in the scene frame.
    pub target: Matrix,
    pub loss_mask: Vec<bool>,
    pub types: Vec<AgentType>,
}

impl Scene {
    /// Graph and targets of a (normalised) sample.
    pub fn from_sample(sample: &SequenceSample, mode: AdjacencyMode, radius: f64) -> Result<Self> {
        Ok(Self {
            id: format!("{}@{}", sample.recording_id, sample.anchor_frame),
            graph: build_adjacency(sample, mode, radius)?,
            target: sample.fut.clone(),
            loss_mask: sample.loss_mask.clone(),
            types: sample.agent_types(),
        })
    }

    pub fn num_agents(&self) -> usize {
        self.graph.num_nodes()
    }

    /// The scene rotated by `theta` about the origin: positions, headings of
    /// observed frames, anchors and targets. Distances, and therefore the
    /// adjacency, are unchanged.
    pub fn rotated(&self, theta: f64) -> Scene {
        let (s, c) = libm::sincos(theta);
        let rot = |x: f64, y: f64| (c * x - s * y, s * x + c * y);
        let mut out = self.clone();
        let f = &mut out.graph.node_features;
        let frames = f.cols() / FEATURES;
        for i in 0..f.rows() {
            let row = f.row_mut(i);
            for k in 0..frames {
                let fr = &mut row[k * FEATURES..(k + 1) * FEATURES];
                // Absent frames are all zero, including the type one-hot.
                if fr[3..].iter().all(|&v| v == 0.0) {
                    continue;
                }
                let (x, y) = rot(fr[0], fr[1]);
                fr[0] = x;
                fr[1] = y;
                fr[2] = wrap_angle(fr[2] + theta);
            }
        }
        for p in &mut out.graph.anchor_positions {
            let (x, y) = rot(p[0], p[1]);
            *p = [x, y];
        }
        for i in 0..out.target.rows() {
            for t in 0..out.target.cols() / 2 {
                let (x, y) = rot(out.target.get(i, 2 * t), out.target.get(i, 2 * t + 1));
                out.target.set(i, 2 * t, x);
                out.target.set(i, 2 * t + 1, y);
            }
        }
        out
    }
}

/// Windows, normalises and converts tracks into scenes.
pub fn scenes_from_tracks(
    tracks: &[AgentTrack],
    window: WindowConfig,
    mode: AdjacencyMode,
    radius: f64,
) -> Result<Vec<Scene>> {
    window_sequences(tracks, window)?
        .iter()
        .map(|s| Scene::from_sample(&normalize_sample(s), mode, radius))
        .collect()
}

/// Block-diagonal composition of several scenes.
#[derive(Debug, Clone)]
pub struct SceneBatch {
    pub graph: GraphBatch,
    pub target: Matrix,
    pub loss_mask: Vec<bool>,
    pub types: Vec<AgentType>,
}

impl SceneBatch {
    pub fn new(scenes: &[&Scene]) -> Result<Self> {
        let graphs: Vec<&SceneGraph> = scenes.iter().map(|s| &s.graph).collect();
        let targets: Vec<&Matrix> = scenes.iter().map(|s| &s.target).collect();
        Ok(Self {
            graph: GraphBatch::from_graphs(&graphs)?,
            target: Matrix::vstack(&targets)?,
            loss_mask: scenes.iter().flat_map(|s| s.loss_mask.iter().copied()).collect(),
            types: scenes.iter().flat_map(|s| s.types.iter().copied()).collect(),
        })
    }
}

/// Metrics and mean loss over a set of scenes, evaluated in batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub metrics: MetricReport,
}

/// Evaluation-mode loss and metrics. Scenes without eligible agents are
/// skipped.
pub fn evaluate(model: &Model, scenes: &[Scene], loss_cfg: &LossConfig, batch_size: usize) -> Result<Evaluation> {
    let usable: Vec<&Scene> = scenes.iter().filter(|s| s.loss_mask.iter().any(|&m| m)).collect();
    if usable.is_empty() {
        return Err(Error::EmptyDataset("no scene has an eligible agent".into()));
    }
    let mut acc = MetricAccumulator::new();
    let mut loss_sum = 0.0;
    for chunk in usable.chunks(batch_size.max(1)) {
        let batch = SceneBatch::new(chunk)?;
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &batch.graph, false, &mut seeded_rng(0))?;
        let out = total_loss(&mut tape, fwd.prediction, &batch.target, &batch.loss_mask, &batch.graph, loss_cfg)?;
        loss_sum += tape.value(out.loss).item() * chunk.len() as f64;
        let pred = tape.value(fwd.prediction);
        acc.merge(&evaluate_batch(pred, &batch.target, &batch.loss_mask, &batch.types, &batch.graph));
    }
    Ok(Evaluation {
        loss: loss_sum / usable.len() as f64,
        metrics: acc.finish()?,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Optimisation steps taken so far.
    pub steps: usize,
    /// Mean training loss over the epoch's steps (train mode).
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_ade: Option<f64>,
    pub val_fde: Option<f64>,
    pub val_overlap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation ADE (the last ones without a
    /// validation split).
    pub best: Model,
    pub last: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Loss of every optimisation step.
    pub step_losses: Vec<f64>,
    pub optimizer: OptimizerState,
}

/// Runs AdamW over shuffled scene batches, validating after every epoch.
/// Stops after `max_epochs`, `max_steps`, or `early_stop_patience` epochs
/// without improvement.
pub fn train(
    model: Model,
    train_scenes: &[Scene],
    val_scenes: &[Scene],
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_callback(model, train_scenes, val_scenes, loss_cfg, cfg, |_| {})
}

/// [`train`] with a hook receiving each epoch's log line as it is produced.
pub fn train_with_callback(
    mut model: Model,
    train_scenes: &[Scene],
    val_scenes: &[Scene],
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss_cfg.validate()?;
    let mut order: Vec<usize> = (0..train_scenes.len())
        .filter(|&k| train_scenes[k].loss_mask.iter().any(|&m| m))
        .collect();
    if order.is_empty() {
        return Err(Error::EmptyDataset("training split has no scene with an eligible agent".into()));
    }
    let mut shuffle_rng = seeded_rng(cfg.seed);
    let mut dropout_rng = seeded_rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut augment_rng = seeded_rng(cfg.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut state = OptimizerState::new(&model.params);
    let mut log = Vec::new();
    let mut step_losses = Vec::new();
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_ade = f64::INFINITY;
    let mut stale = 0;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    let planned = cfg
        .max_steps
        .unwrap_or_else(|| cfg.max_epochs.saturating_mul(order.len().div_ceil(cfg.batch_size)));
    let mut step_cfg = cfg.clone();

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if step_losses.len() >= max_steps {
                break;
            }
            let batch = if cfg.augment_rotation {
                let rotated: Vec<Scene> = chunk
                    .iter()
                    .map(|&k| train_scenes[k].rotated(augment_rng.random_range(-core::f64::consts::PI..core::f64::consts::PI)))
                    .collect();
                SceneBatch::new(&rotated.iter().collect::<Vec<_>>())?
            } else {
                SceneBatch::new(&chunk.iter().map(|&k| &train_scenes[k]).collect::<Vec<_>>())?
            };
            let loss = gradient_step(&mut model, &batch, loss_cfg, &mut dropout_rng, step_losses.len())?;
            step_cfg.lr = cfg.schedule.lr_at(cfg.lr, step_losses.len(), planned);
            optimizer_step(&mut model.params, &mut state, &step_cfg)?;
            step_losses.push(loss);
            epoch_loss += loss;
            epoch_steps += 1;
        }
        if epoch_steps == 0 {
            break;
        }
        let mut entry = EpochLog {
            epoch,
            steps: step_losses.len(),
            train_loss: epoch_loss / epoch_steps as f64,
            val_loss: None,
            val_ade: None,
            val_fde: None,
            val_overlap: None,
        };
        if val_scenes.is_empty() {
            best = model.clone();
            best_epoch = epoch;
        } else {
            let ev = evaluate(&model, val_scenes, loss_cfg, cfg.batch_size)?;
            entry.val_loss = Some(ev.loss);
            entry.val_ade = Some(ev.metrics.ade);
            entry.val_fde = Some(ev.metrics.fde);
            entry.val_overlap = Some(ev.metrics.overlap_rate);
            if ev.metrics.ade < best_ade {
                best_ade = ev.metrics.ade;
                best = model.clone();
                best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
            }
        }
        on_epoch(&entry);
        log.push(entry);
        if stale >= cfg.early_stop_patience && !val_scenes.is_empty() {
            break 'epochs;
        }
        if step_losses.len() >= max_steps {
            break;
        }
    }
    Ok(TrainOutcome {
        best,
        last: model,
        best_epoch,
        log,
        step_losses,
        optimizer: state,
    })
}

/// Forward, loss and backward for one batch in training mode; gradients are
/// left in the model's parameters. Returns the loss value.
pub fn gradient_step(
    model: &mut Model,
    batch: &SceneBatch,
    loss_cfg: &LossConfig,
    rng: &mut SeededRng,
    step: usize,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bindings = model.params.bind(&mut tape);
    let fwd = model.forward_bound(&mut tape, &bindings, &batch.graph, true, rng)?;
    let out = total_loss(&mut tape, fwd.prediction, &batch.target, &batch.loss_mask, &batch.graph, loss_cfg)?;
    let loss = tape.value(out.loss).item();
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: step as u64,
            detail: format!("loss {loss} with overlaps {:?}", out.overlaps),
        });
    }
    let grads = tape.backward(out.loss)?;
    model.params.zero_grads();
    model.params.accumulate(&bindings, &grads)?;
    Ok(loss)
}

/// Largest gradient discrepancy of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// One gradient comparison on one random graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTrial {
    pub variant: Variant,
    pub num_heads: usize,
    pub nodes: usize,
    pub kink_margin: f64,
    pub params: Vec<ParamCheck>,
}

impl GradientTrial {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub tolerance: f64,
    pub trials: Vec<GradientTrial>,
}

impl GradientReport {
    pub fn max_rel_err(&self) -> f64 {
        self.trials.iter().map(GradientTrial::max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }

    /// Worst error per variant.
    pub fn by_variant(&self) -> Vec<(Variant, f64)> {
        Variant::ALL
            .iter()
            .filter_map(|&v| {
                let errs: Vec<f64> = self.trials.iter().filter(|t| t.variant == v).map(|t| t.max_rel_err()).collect();
                (!errs.is_empty()).then(|| (v, errs.into_iter().fold(0.0, f64::max)))
            })
            .collect()
    }
}

/// Central-difference step used by the gradient harness.
pub const GRADCHECK_EPS: f64 = 1e-5;
/// Denominator floor of the relative error per unit of loss. Central
/// differences carry round-off of order `|L| · ε_mach / eps`, so entries whose
/// gradient is below `GRADCHECK_FLOOR · max(1, |L|)` are compared in absolute
/// terms against that floor.
pub const GRADCHECK_FLOOR: f64 = 1e-5;
/// Minimum distance of every activation / Huber input from its kink.
pub const GRADCHECK_KINK_MARGIN: f64 = 1e-3;

/// Loss with overlaps held at `overlaps`, evaluated without dropout.
fn frozen_loss(model: &Model, batch: &SceneBatch, loss_cfg: &LossConfig, overlaps: &[f64]) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &batch.graph, false, &mut seeded_rng(0))?;
    let out = total_loss_with_overlaps(
        &mut tape,
        fwd.prediction,
        &batch.target,
        &batch.loss_mask,
        &batch.graph,
        loss_cfg,
        overlaps,
    )?;
    Ok((tape.value(out.loss).item(), tape.kink_margin()))
}

/// Compares the analytic gradient of the loss with central differences for
/// every parameter entry. Overlap fractions are measured once and held
/// fixed. Returns the per-parameter errors and the kink margin of the
/// unperturbed pass.
pub fn check_model_gradients(
    model: &Model,
    batch: &SceneBatch,
    loss_cfg: &LossConfig,
    eps: f64,
) -> Result<(Vec<ParamCheck>, f64)> {
    let mut probe = model.clone();
    probe.config.dropout_p = 0.0;
    probe.config.attention_dropout_p = 0.0;

    let mut tape = Tape::new();
    let bindings = probe.params.bind(&mut tape);
    let fwd = probe.forward_bound(&mut tape, &bindings, &batch.graph, false, &mut seeded_rng(0))?;
    let overlaps = scene_overlaps(tape.value(fwd.prediction), &batch.graph);
    let out = total_loss_with_overlaps(
        &mut tape,
        fwd.prediction,
        &batch.target,
        &batch.loss_mask,
        &batch.graph,
        loss_cfg,
        &overlaps,
    )?;
    let margin = tape.kink_margin();
    let floor = GRADCHECK_FLOOR * tape.value(out.loss).item().abs().max(1.0);
    let grads = tape.backward(out.loss)?;
    probe.params.zero_grads();
    probe.params.accumulate(&bindings, &grads)?;

    let names: Vec<String> = probe.params.names().map(String::from).collect();
    let mut checks = Vec::with_capacity(names.len());
    for name in names {
        let analytic = probe.params.get(&name).expect("named param").grad.clone();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for k in 0..analytic.len() {
            let original = probe.params.get(&name).expect("named param").value.as_slice()[k];
            let mut eval = |x: f64| -> Result<f64> {
                probe.params.get_mut(&name).expect("named param").value.as_mut_slice()[k] = x;
                Ok(frozen_loss(&probe, batch, loss_cfg, &overlaps)?.0)
            };
            let plus = eval(original + eps)?;
            let minus = eval(original - eps)?;
            eval(original)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.as_slice()[k];
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(relative_error(a, numeric, floor));
        }
        checks.push(ParamCheck {
            name,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
        });
    }
    Ok((checks, margin))
}

/// Random scene batch for gradient checks: `n` agents, normal targets and a
/// random non-empty loss mask.
pub fn random_check_batch(rng: &mut SeededRng, n: usize, cfg: &ModelConfig) -> Result<SceneBatch> {
    let graph = random_scene_graph(rng, n, cfg.input_dim, 8.0)?;
    let normal = Normal::new(0.0, 2.0).expect("positive std");
    let target = Matrix::from_fn(n, 2 * cfg.t_pred, |_, _| normal.sample(rng));
    let mut loss_mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
    let k = rng.random_range(0..n);
    loss_mask[k] = true;
    let scene = Scene {
        id: String::from("gradcheck"),
        graph,
        target,
        loss_mask,
        types: vec![AgentType::Vehicle; n],
    };
    SceneBatch::new(&[&scene])
}

/// For each variant (the attention variant with `heads` heads), `trials`
/// random graphs with 2 to 6 nodes and freshly initialised parameters. Draws
/// whose activation inputs come within [`GRADCHECK_KINK_MARGIN`] of a kink
/// are redrawn. Failures are reported, not raised.
pub fn verify_gradients(
    base: &ModelConfig,
    loss_cfg: &LossConfig,
    trials: usize,
    heads: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradientReport> {
    let mut rng = seeded_rng(seed);
    let mut report = GradientReport {
        tolerance,
        trials: Vec::new(),
    };
    for variant in Variant::ALL {
        let mut cfg = base.clone();
        cfg.variant = variant;
        cfg.num_heads = if variant == Variant::Attention { heads } else { 1 };
        cfg.dropout_p = 0.0;
        cfg.attention_dropout_p = 0.0;
        cfg.validate()?;
        for _ in 0..trials {
            let mut attempts = 0;
            loop {
                attempts += 1;
                let n = rng.random_range(2..=6);
                let batch = random_check_batch(&mut rng, n, &cfg)?;
                let model = Model::init(cfg.clone(), rng.random())?;
                let (_, margin) = frozen_loss(&model, &batch, loss_cfg, &vec![0.0; 1])?;
                if margin < GRADCHECK_KINK_MARGIN && attempts < 100 {
                    continue;
                }
                let (params, margin) = check_model_gradients(&model, &batch, loss_cfg, GRADCHECK_EPS)?;
                report.trials.push(GradientTrial {
                    variant,
                    num_heads: cfg.num_heads,
                    nodes: n,
                    kink_margin: margin,
                    params,
                });
                break;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Param;

    fn scalar_store(w: f64, g: f64) -> ParamStore {
        let mut p = Param::new("w", Matrix::scalar(w));
        p.grad = Matrix::scalar(g);
        ParamStore::from_params(vec![p]).unwrap()
    }

    fn cfg(lr: f64, wd: f64) -> TrainConfig {
        TrainConfig {
            lr,
            weight_decay: wd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_adam_step_by_hand() {
        let mut ps = scalar_store(1.0, 1.0);
        let mut st = OptimizerState::new(&ps);
        optimizer_step(&mut ps, &mut st, &cfg(0.1, 0.0)).unwrap();
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((ps.get("w").unwrap().value.item() - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_without_decay() {
        let mut ps = scalar_store(0.7, 0.0);
        let mut st = OptimizerState::new(&ps);
        for _ in 0..5 {
            optimizer_step(&mut ps, &mut st, &cfg(0.1, 0.0)).unwrap();
        }
        assert_eq!(ps.get("w").unwrap().value.item(), 0.7);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut ps = scalar_store(2.0, 0.0);
        let mut st = OptimizerState::new(&ps);
        optimizer_step(&mut ps, &mut st, &cfg(0.1, 0.01)).unwrap();
        assert!((ps.get("w").unwrap().value.item() - 2.0 * (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_the_step() {
        let mut ps = scalar_store(1.0, f64::NAN);
        let mut st = OptimizerState::new(&ps);
        let err = optimizer_step(&mut ps, &mut st, &cfg(0.1, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(ps.get("w").unwrap().value.item(), 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::Cosine { min_lr: 1e-4 };
        assert_eq!(s.lr_at(1e-2, 0, 100), 1e-2);
        assert!((s.lr_at(1e-2, 50, 100) - (1e-4 + (1e-2 - 1e-4) * 0.5)).abs() < 1e-15);
        assert!((s.lr_at(1e-2, 100, 100) - 1e-4).abs() < 1e-15);
        assert_eq!(LrSchedule::Constant.lr_at(0.3, 7, 10), 0.3);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(cfg(0.0, 0.0).validate().is_err());
        assert!(cfg(1e-3, -1.0).validate().is_err());
    }
}
