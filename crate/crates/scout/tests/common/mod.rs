#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use scout::checkpoint::{Checkpoint, InputSchema};
use scout::config::{LoadedConfig, Overrides, RunConfig};
use scout_core::graph::{AdjacencyMode, DEFAULT_RADIUS};
use scout_core::loss::LossConfig;
use scout_core::model::{Model, ModelConfig, OutputMode, Variant};
use scout_core::traj::{WindowConfig, FEATURES};

pub const HEADER: &str = "recording_id,frame,track_id,x,y,heading,agent_type\n";

/// `(recording, track, type, start, velocity)` agents over `frames` frames.
pub fn csv_of(agents: &[(&str, i64, &str, [f64; 2], [f64; 2])], frames: i64) -> String {
    let mut s = String::from(HEADER);
    for t in 0..frames {
        for &(rec, id, ty, p, v) in agents {
            let _ = writeln!(
                s,
                "{rec},{t},{id},{},{},0.0,{ty}",
                p[0] + v[0] * t as f64,
                p[1] + v[1] * t as f64
            );
        }
    }
    s
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Small, fast configuration at the frame rate of the fixtures.
pub fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 5
[data]
source_hz = 2.5
target_hz = 2.5
t_obs = 4
t_pred = 3
stride = 7
val_fraction = 0.0
test_fraction = 0.0
[model]
variant = "attention"
hidden_dim = 6
num_heads = 2
edge_dim = 3
dropout_p = 0.1
attention_dropout_p = 0.1
output_mode = "velocities"
[train]
lr = 0.005
batch_size = 2
max_epochs = 3
{extra}
"#
    );
    write(dir, "run.toml", &text)
}

pub fn load(path: &Path) -> LoadedConfig {
    RunConfig::load(Some(path), &Overrides::default()).unwrap()
}

pub fn schema(t_obs: usize, t_pred: usize) -> InputSchema {
    InputSchema::for_window(
        WindowConfig { t_obs, t_pred, stride: 1 },
        AdjacencyMode::Kernel,
        DEFAULT_RADIUS,
    )
}

/// Velocities-mode model whose output head is zero: every agent stays at its
/// anchor.
pub fn still_model(variant: Variant, t_obs: usize, t_pred: usize) -> Model {
    let cfg = ModelConfig {
        variant,
        input_dim: t_obs * FEATURES,
        hidden_dim: 6,
        num_heads: if variant == Variant::Attention { 2 } else { 1 },
        t_pred,
        output_mode: OutputMode::Velocities,
        ..ModelConfig::default()
    };
    let mut m = Model::init(cfg, 1).unwrap();
    for name in ["head.w2", "head.b2"] {
        m.params.get_mut(name).unwrap().value.fill(0.0);
    }
    m
}

pub fn save_checkpoint(model: &Model, schema: InputSchema, path: &Path) {
    Checkpoint::new(model, LossConfig::default(), schema, 0).save(path).unwrap();
}
