//! The pipeline steps behind each subcommand. Every command writes its
//! artefacts plus a `manifest.json` into its output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scout_core::attribution::{integrated_gradients_edges, AttributionResult, AttributionTarget, EdgeBaseline};
use scout_core::graph::GraphBatch;
use scout_core::loss::{LossConfig, MetricReport};
use scout_core::model::Model;
use scout_core::synth::{synthetic_tracks, SynthConfig};
use scout_core::train::{evaluate, train_with_callback, verify_gradients, GradientReport, Scene};
use scout_core::traj::{
    denormalize_positions, normalize_sample, resample, window_sequences, AgentType, DatasetSplit, SequenceSample,
    SplitProvenance,
};
use scout_core::Error as CoreError;

use crate::checkpoint::{Checkpoint, InputSchema};
use crate::config::LoadedConfig;
use crate::data::{load_trajectories, write_json, write_trajectories, DatasetCache, CACHE_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::export::{export_interaction_graph, EdgeScore, ExportFormat};
use crate::manifest::{JsonLines, RunManifest};

pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LAST_CHECKPOINT_FILE: &str = "last.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTION_FILE: &str = "prediction.json";
pub const ATTRIBUTION_FILE: &str = "attribution.json";
pub const GRAPH_JSON_FILE: &str = "graph.json";
pub const GRAPH_DOT_FILE: &str = "graph.dot";

/// Evaluation batch size; it only affects speed.
const EVAL_BATCH: usize = 32;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn required<'a>(flag: Option<&'a Path>, fallback: Option<&'a PathBuf>, what: &str) -> Result<&'a Path> {
    flag.or(fallback.map(PathBuf::as_path))
        .ok_or_else(|| Error::Usage(format!("no {what} given (flag or config file)")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub tracks: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub cache: PathBuf,
}

/// Resamples, windows, normalises and splits a trajectory table by recording.
pub fn cmd_prepare(cfg: &LoadedConfig, input: Option<&Path>, out: &Path) -> Result<PrepareSummary> {
    let c = &cfg.config;
    let input = required(input, c.data.csv.as_ref(), "input CSV")?;
    let mut manifest = RunManifest::start("prepare", cfg);
    let tracks = load_trajectories(input, &c.data.columns)?;
    let tracks = resample(&tracks, c.data.source_hz, c.data.target_hz)?;
    let samples: Vec<SequenceSample> = window_sequences(&tracks, c.data.window())?
        .iter()
        .map(normalize_sample)
        .collect();
    if samples.is_empty() {
        return Err(CoreError::EmptyDataset(format!(
            "{}: no complete {}+{} frame window",
            input.display(),
            c.data.t_obs,
            c.data.t_pred
        ))
        .into());
    }
    let recordings: Vec<String> = tracks.iter().map(|t| t.recording_id.clone()).collect();
    let provenance = if c.data.val_recordings.is_empty() && c.data.test_recordings.is_empty() {
        SplitProvenance::by_fraction(&recordings, c.data.test_fraction, c.data.val_fraction, c.seed)
    } else {
        SplitProvenance::explicit(&recordings, &c.data.val_recordings, &c.data.test_recordings)?
    };
    let split = DatasetSplit::assemble(samples, provenance)?;
    create_dir(out)?;
    let cache_path = out.join(DATASET_FILE);
    let summary = PrepareSummary {
        tracks: tracks.len(),
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        cache: cache_path.clone(),
    };
    DatasetCache {
        format_version: CACHE_FORMAT_VERSION,
        source_hz: c.data.source_hz,
        target_hz: c.data.target_hz,
        window: c.data.window(),
        split,
    }
    .save(&cache_path)?;
    manifest.inputs.push(input.into());
    manifest.outputs.push(cache_path);
    manifest.finish(out)?;
    Ok(summary)
}

/// Scenes of one split, built the way `schema` prescribes.
pub fn split_scenes(cache: &DatasetCache, split: &str, schema: &InputSchema) -> Result<(Vec<SequenceSample>, Vec<Scene>)> {
    let data_schema = InputSchema::for_window(cache.window, schema.adjacency, schema.radius);
    schema.check_compatible(&data_schema)?;
    let samples = cache
        .split
        .get(split)
        .ok_or_else(|| Error::Usage(format!("unknown split `{split}` (train, val or test)")))?
        .to_vec();
    let scenes = samples
        .iter()
        .map(|s| Scene::from_sample(s, schema.adjacency, schema.radius))
        .collect::<scout_core::Result<Vec<_>>>()?;
    Ok((samples, scenes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub epochs: usize,
    pub val: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub checkpoint: PathBuf,
}

/// Trains on the cached train split, keeping the best-validation parameters.
pub fn cmd_train(cfg: &LoadedConfig, data: Option<&Path>, out: &Path) -> Result<TrainSummary> {
    let c = &cfg.config;
    let data = required(data, c.data.cache.as_ref(), "prepared dataset")?;
    let mut manifest = RunManifest::start("train", cfg);
    let cache = DatasetCache::load(data)?;
    let schema = c.data.input_schema();
    let (_, train_scenes) = split_scenes(&cache, "train", &schema)?;
    let (_, val_scenes) = split_scenes(&cache, "val", &schema)?;
    let (_, test_scenes) = split_scenes(&cache, "test", &schema)?;
    if !train_scenes.iter().any(|s| s.loss_mask.iter().any(|&m| m)) {
        return Err(CoreError::EmptyDataset(format!("{}: train split has no usable scene", data.display())).into());
    }
    create_dir(out)?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut log = JsonLines::create(&log_path)?;
    let mut log_err = None;
    let model = Model::init(c.model.clone(), c.seed)?;
    let outcome = train_with_callback(model, &train_scenes, &val_scenes, &c.loss, &c.train, |line| {
        if log_err.is_none() {
            log_err = log.write(line).err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(e);
    }
    log.finish()?;

    let ck_path = out.join(CHECKPOINT_FILE);
    Checkpoint::new(&outcome.best, c.loss, schema, outcome.best_epoch).save(&ck_path)?;
    let last_path = out.join(LAST_CHECKPOINT_FILE);
    let last_epoch = outcome.log.last().map_or(0, |l| l.epoch);
    Checkpoint::new(&outcome.last, c.loss, schema, last_epoch).save(&last_path)?;

    let report = |split: &str, scenes: &[Scene]| -> Result<Option<EvalReport>> {
        if scenes.iter().any(|s| s.loss_mask.iter().any(|&m| m)) {
            Ok(Some(eval_report(&outcome.best, &c.loss, scenes, &cache, split, &ck_path, &cfg.hash, false)?))
        } else {
            Ok(None)
        }
    };
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        epochs: outcome.log.len(),
        val: report("val", &val_scenes)?,
        test: report("test", &test_scenes)?,
        checkpoint: ck_path.clone(),
    };
    let metrics_path = out.join(METRICS_FILE);
    write_json(&metrics_path, &summary)?;
    manifest.inputs.push(data.into());
    manifest.outputs.extend([ck_path, last_path, log_path, metrics_path]);
    manifest.finish(out)?;
    Ok(summary)
}

/// Metrics of one evaluation run with enough context to trace it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub config_hash: String,
    pub split: String,
    pub recordings: Vec<String>,
    /// True when the model never saw data from this distribution.
    pub zero_shot: bool,
    pub loss: f64,
    pub metrics: MetricReport,
}

#[allow(clippy::too_many_arguments)]
fn eval_report(
    model: &Model,
    loss: &LossConfig,
    scenes: &[Scene],
    cache: &DatasetCache,
    split: &str,
    checkpoint: &Path,
    config_hash: &str,
    zero_shot: bool,
) -> Result<EvalReport> {
    let ev = evaluate(model, scenes, loss, EVAL_BATCH)?;
    let recordings = match split {
        "train" => &cache.split.provenance.train,
        "val" => &cache.split.provenance.val,
        _ => &cache.split.provenance.test,
    };
    Ok(EvalReport {
        checkpoint: checkpoint.into(),
        config_hash: config_hash.into(),
        split: split.into(),
        recordings: recordings.clone(),
        zero_shot,
        loss: ev.loss,
        metrics: ev.metrics,
    })
}

fn evaluate_checkpoint(
    cfg: &LoadedConfig,
    checkpoint: &Path,
    data: &Path,
    split: &str,
    zero_shot: bool,
    out: Option<&Path>,
    command: &str,
) -> Result<EvalReport> {
    let mut manifest = RunManifest::start(command, cfg);
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let cache = DatasetCache::load(data)?;
    let (_, scenes) = split_scenes(&cache, split, &ck.input)?;
    let report = eval_report(&model, &ck.loss, &scenes, &cache, split, checkpoint, &cfg.hash, zero_shot)?;
    if let Some(out) = out {
        create_dir(out)?;
        let path = out.join(METRICS_FILE);
        write_json(&path, &report)?;
        manifest.inputs.extend([checkpoint.to_path_buf(), data.to_path_buf()]);
        manifest.outputs.push(path);
        manifest.finish(out)?;
    }
    Ok(report)
}

/// Metrics of a checkpoint on one split of a prepared dataset.
pub fn cmd_evaluate(
    cfg: &LoadedConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    split: &str,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let data = required(data, cfg.config.data.cache.as_ref(), "prepared dataset")?;
    evaluate_checkpoint(cfg, checkpoint, data, split, false, out, "evaluate")
}

/// Evaluation on a dataset from another domain, without any weight update.
pub fn cmd_transfer_eval(
    cfg: &LoadedConfig,
    checkpoint: &Path,
    data: &Path,
    split: &str,
    out: Option<&Path>,
) -> Result<EvalReport> {
    evaluate_checkpoint(cfg, checkpoint, data, split, true, out, "transfer-eval")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPrediction {
    pub agent_id: i64,
    pub agent_type: AgentType,
    /// World-frame position at the last observed frame.
    pub anchor: [f64; 2],
    /// World-frame positions for the next `t_pred` frames.
    pub trajectory: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scene_id: String,
    pub recording_id: String,
    pub anchor_frame: i64,
    pub agents: Vec<AgentPrediction>,
}

fn find_scene<'a>(
    samples: &'a [SequenceSample],
    scenes: &'a [Scene],
    scene_id: Option<&str>,
) -> Result<(&'a SequenceSample, &'a Scene)> {
    let k = match scene_id {
        Some(id) => scenes
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::Usage(format!("scene `{id}` not found in the split")))?,
        None if scenes.is_empty() => return Err(CoreError::EmptyDataset("split has no scenes".into()).into()),
        None => 0,
    };
    Ok((&samples[k], &scenes[k]))
}

/// Forecast for one scene, in world coordinates.
pub fn cmd_predict(
    cfg: &LoadedConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    split: &str,
    scene_id: Option<&str>,
    out: Option<&Path>,
) -> Result<Prediction> {
    let data = required(data, cfg.config.data.cache.as_ref(), "prepared dataset")?;
    let mut manifest = RunManifest::start("predict", cfg);
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let cache = DatasetCache::load(data)?;
    let (samples, scenes) = split_scenes(&cache, split, &ck.input)?;
    let (sample, scene) = find_scene(&samples, &scenes, scene_id)?;
    let pred = model.predict(&GraphBatch::single(&scene.graph)?)?;
    let world = denormalize_positions(&pred, sample.origin);
    let prediction = Prediction {
        scene_id: scene.id.clone(),
        recording_id: sample.recording_id.clone(),
        anchor_frame: sample.anchor_frame,
        agents: sample
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = sample.anchor_position(i);
                AgentPrediction {
                    agent_id: a.agent_id,
                    agent_type: a.agent_type,
                    anchor: [p[0] + sample.origin[0], p[1] + sample.origin[1]],
                    trajectory: world.row(i).chunks(2).map(|c| [c[0], c[1]]).collect(),
                }
            })
            .collect(),
    };
    if let Some(out) = out {
        create_dir(out)?;
        let path = out.join(PREDICTION_FILE);
        write_json(&path, &prediction)?;
        manifest.inputs.extend([checkpoint.to_path_buf(), data.to_path_buf()]);
        manifest.outputs.push(path);
        manifest.finish(out)?;
    }
    Ok(prediction)
}

/// Integrated-gradients attribution of one scene's interactions, written as
/// the raw result plus JSON and DOT graph exports.
#[allow(clippy::too_many_arguments)]
pub fn cmd_attribute(
    cfg: &LoadedConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    split: &str,
    scene_id: Option<&str>,
    target: AttributionTarget,
    n_steps: usize,
    out: &Path,
) -> Result<AttributionResult> {
    let data = required(data, cfg.config.data.cache.as_ref(), "prepared dataset")?;
    let mut manifest = RunManifest::start("attribute", cfg);
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model()?;
    let cache = DatasetCache::load(data)?;
    let (samples, scenes) = split_scenes(&cache, split, &ck.input)?;
    let (_, scene) = find_scene(&samples, &scenes, scene_id)?;
    let result = integrated_gradients_edges(&model, &scene.graph, target, &EdgeBaseline::NoInteraction, n_steps)?;
    create_dir(out)?;
    let raw = out.join(ATTRIBUTION_FILE);
    write_json(&raw, &result)?;
    let json = out.join(GRAPH_JSON_FILE);
    let dot = out.join(GRAPH_DOT_FILE);
    export_interaction_graph(&scene.graph, &result, &json, ExportFormat::Json, EdgeScore::IntegratedGradients)?;
    export_interaction_graph(&scene.graph, &result, &dot, ExportFormat::Dot, EdgeScore::IntegratedGradients)?;
    manifest.inputs.extend([checkpoint.to_path_buf(), data.to_path_buf()]);
    manifest.outputs.extend([raw, json, dot]);
    manifest.finish(out)?;
    Ok(result)
}

/// Writes a synthetic interaction dataset as a trajectory table.
pub fn cmd_synth(synth: &SynthConfig, out: &Path) -> Result<usize> {
    let tracks = synthetic_tracks(synth)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_trajectories(out, &tracks)?;
    Ok(tracks.len())
}

/// Finite-difference check of every variant under the configured loss.
pub fn cmd_gradcheck(cfg: &LoadedConfig, trials: usize, heads: usize, tolerance: f64) -> Result<GradientReport> {
    let c = &cfg.config;
    let base = scout_core::model::ModelConfig {
        input_dim: 12,
        hidden_dim: 12,
        t_pred: 4,
        dropout_p: 0.0,
        attention_dropout_p: 0.0,
        ..c.model.clone()
    };
    Ok(verify_gradients(&base, &c.loss, trials, heads, tolerance, c.seed)?)
}
