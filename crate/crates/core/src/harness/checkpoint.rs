//! Versioned JSON checkpoints. Floats are written in their shortest
//! round-trip form, so loading restores parameters bit for bit and
//! save → load → save reproduces the file byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::numeric::SplitSeed;

use super::config::ExperimentConfig;
use super::data::Dataset;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogEntry {
    pub step: usize,
    /// Mean loss of the training batches since the previous entry, under
    /// their sampled masks (`None` at step 0).
    pub batch_xe: Option<f64>,
    /// Deterministic XE on a fixed prefix of the training split.
    pub train_xe: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub step: usize,
    /// Root of every random stream used by training.
    pub rng: SplitSeed,
    pub history: Vec<LogEntry>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint format {} (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        ckpt.config.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rebuilds the dataset the checkpoint was trained on.
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::load(&self.config.data, &self.rng.child(super::train::DATA_STREAM))
    }

    /// The model, checked against the data sizes.
    pub fn model(&self, data: &Dataset) -> Result<Model> {
        let arch = self.config.architecture(data.inputs, data.classes)?;
        if &arch != self.params.architecture() {
            return Err(Error::config(
                "checkpoint parameters do not match the architecture implied by its data",
            ));
        }
        Model::new(self.params.clone(), self.config.dropout.clone())
    }
}
