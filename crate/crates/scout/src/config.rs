//! Run configuration: one TOML file with `[data]`, `[model]`, `[loss]` and
//! `[train]` sections, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scout_core::graph::{AdjacencyMode, DEFAULT_RADIUS};
use scout_core::loss::LossConfig;
use scout_core::model::{ModelConfig, Variant};
use scout_core::train::TrainConfig;
use scout_core::traj::{WindowConfig, FEATURES};

use crate::checkpoint::InputSchema;
use crate::data::ColumnMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw trajectory table read by `prepare`.
    pub csv: Option<PathBuf>,
    /// Prepared dataset read by the other commands.
    pub cache: Option<PathBuf>,
    pub columns: ColumnMap,
    pub source_hz: f64,
    pub target_hz: f64,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Frames between consecutive window anchors.
    pub stride: usize,
    pub adjacency: AdjacencyMode,
    /// Interaction radius in metres.
    pub radius: f64,
    /// Fractions of recordings held out when no explicit lists are given.
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Explicit held-out recordings, e.g. one whole scenario for testing.
    pub val_recordings: Vec<String>,
    pub test_recordings: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv: None,
            cache: None,
            columns: ColumnMap::default(),
            source_hz: 25.0,
            target_hz: 2.5,
            t_obs: 8,
            t_pred: 12,
            stride: 1,
            adjacency: AdjacencyMode::Kernel,
            radius: DEFAULT_RADIUS,
            val_fraction: 0.1,
            test_fraction: 0.2,
            val_recordings: Vec::new(),
            test_recordings: Vec::new(),
        }
    }
}

impl DataConfig {
    pub fn window(&self) -> WindowConfig {
        WindowConfig {
            t_obs: self.t_obs,
            t_pred: self.t_pred,
            stride: self.stride,
        }
    }

    pub fn input_schema(&self) -> InputSchema {
        InputSchema::for_window(self.window(), self.adjacency, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for splitting, initialisation, shuffling and dropout.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
        };
        cfg.sync();
        cfg
    }
}

/// Flag values; `None` keeps the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<Variant>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub heads: Option<usize>,
}

/// A parsed configuration and the file it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: Option<PathBuf>,
    /// SHA-256 of the file bytes, or of the effective configuration when no
    /// file was given.
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.into(),
            message: e.to_string(),
        })?;
        cfg.sync();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises to TOML")
    }

    /// Reads `path` when given, applies `overrides`, and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<LoadedConfig> {
        let (mut config, hash) = match path {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                let text = String::from_utf8(bytes.clone()).map_err(|e| Error::Config {
                    path: p.into(),
                    message: e.to_string(),
                })?;
                (RunConfig::from_toml(&text, p)?, Some(sha256_hex(&bytes)))
            }
            None => (RunConfig::default(), None),
        };
        config.apply(overrides);
        config.validate(path)?;
        let hash = hash.unwrap_or_else(|| sha256_hex(config.to_toml().as_bytes()));
        Ok(LoadedConfig {
            config,
            path: path.map(Path::to_path_buf),
            hash,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(v) = o.variant {
            self.model.variant = v;
        }
        if let Some(a) = o.alpha {
            self.loss.alpha = a;
        }
        if let Some(b) = o.beta {
            self.loss.beta = b;
        }
        if let Some(h) = o.heads {
            self.model.num_heads = h;
        }
        self.sync();
    }

    /// Derives the model's input width and horizon from the data section,
    /// routes the root seed to training, and pins single-head variants to one
    /// head.
    fn sync(&mut self) {
        if self.model.variant != Variant::Attention {
            self.model.num_heads = 1;
        }
        self.model.input_dim = self.data.t_obs * FEATURES;
        self.model.t_pred = self.data.t_pred;
        self.train.seed = self.seed;
    }

    pub fn validate(&self, path: Option<&Path>) -> Result<()> {
        let err = |message: String| Error::Config {
            path: path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<defaults>")),
            message,
        };
        let d = &self.data;
        if d.t_obs < 2 || d.t_pred == 0 || d.stride == 0 {
            return Err(err("data: t_obs >= 2, t_pred >= 1 and stride >= 1 required".into()));
        }
        if !(d.radius > 0.0) || !(0.0..1.0).contains(&d.val_fraction) || !(0.0..1.0).contains(&d.test_fraction) {
            return Err(err("data: radius > 0 and split fractions in [0, 1) required".into()));
        }
        self.model.validate().map_err(|e| err(format!("model: {e}")))?;
        self.loss.validate().map_err(|e| err(format!("loss: {e}")))?;
        self.train.validate().map_err(|e| err(format!("train: {e}")))?;
        Ok(())
    }
}
