//! JSON checkpoints: config, column kinds, task and every parameter as a
//! named flat array.

use std::path::Path;

use cheatt_core::linalg::DenseMatrix;
use cheatt_core::nn::{Model, ModelConfig};
use cheatt_core::table::{ColumnKind, Task};
use serde::{Deserialize, Serialize};

use crate::data::Schema;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub columns: Vec<ColumnKind>,
    pub task: Task,
    /// Preprocessing fitted on the training data, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Schema>,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, schema: Option<&Schema>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.config().clone(),
            columns: model.columns().to_vec(),
            task: model.task(),
            schema: schema.cloned(),
            params: model
                .params()
                .params
                .iter()
                .map(|p| NamedArray {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let values = self
            .params
            .iter()
            .map(|a| {
                DenseMatrix::from_vec(a.rows, a.cols, a.data.clone())
                    .map(|m| (a.name.clone(), m))
                    .map_err(|e| Error::Format(format!("parameter {}: {e}", a.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model::from_parts(
            self.config.clone(),
            self.columns.clone(),
            self.task,
            values,
        )?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: Option<u32>,
        }
        let v: Version = serde_json::from_str(text)?;
        match v.format_version {
            Some(FORMAT_VERSION) => Ok(serde_json::from_str(text)?),
            Some(other) => Err(Error::Format(format!(
                "checkpoint format_version {other} is not supported (expected {FORMAT_VERSION})"
            ))),
            None => Err(Error::Format("checkpoint has no format_version".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
