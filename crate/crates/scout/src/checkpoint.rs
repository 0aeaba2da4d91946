//! Versioned JSON checkpoints: model configuration, parameters and the
//! preprocessing a model expects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scout_core::graph::AdjacencyMode;
use scout_core::loss::LossConfig;
use scout_core::model::{Model, ModelConfig};
use scout_core::numerics::{Matrix, Param, ParamStore};
use scout_core::traj::{WindowConfig, FEATURES};
use scout_core::Error as CoreError;

use crate::data::{read_json, write_json};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// One parameter, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Graph construction and windowing a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSchema {
    pub window: WindowConfig,
    pub features: usize,
    pub adjacency: AdjacencyMode,
    pub radius: f64,
}

impl InputSchema {
    /// Fails unless `other` yields tensors this model can consume.
    pub fn check_compatible(&self, other: &InputSchema) -> Result<()> {
        let (a, b) = (self.window, other.window);
        if a.t_obs != b.t_obs || a.t_pred != b.t_pred || self.features != other.features {
            return Err(CoreError::SchemaMismatch(format!(
                "model expects t_obs {}, t_pred {}, {} features; data has t_obs {}, t_pred {}, {} features",
                a.t_obs, a.t_pred, self.features, b.t_obs, b.t_pred, other.features
            ))
            .into());
        }
        Ok(())
    }

    pub fn for_window(window: WindowConfig, adjacency: AdjacencyMode, radius: f64) -> Self {
        Self {
            window,
            features: FEATURES,
            adjacency,
            radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub input: InputSchema,
    /// Epoch the parameters come from (0 for an untrained model).
    pub epoch: usize,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(model: &Model, loss: LossConfig, input: InputSchema, epoch: usize) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model: model.config.clone(),
            loss,
            input,
            epoch,
            params: model
                .params
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every parameter against the config.
    pub fn model(&self) -> Result<Model> {
        let params = self
            .params
            .iter()
            .map(|r| Ok(Param::new(r.name.clone(), Matrix::from_vec(r.rows, r.cols, r.values.clone())?)))
            .collect::<scout_core::Result<Vec<_>>>()?;
        Ok(Model::from_parts(self.model.clone(), ParamStore::from_params(params)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Checkpoint = read_json(path)?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                path: path.into(),
                found: ck.format_version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        Ok(ck)
    }
}
