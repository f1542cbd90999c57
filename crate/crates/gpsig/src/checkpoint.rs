//! Model checkpoints as versioned JSON. Floats are written in shortest
//! round-trip form and parsed exactly, so save → load reproduces every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use gpsig_core::dataset::NormStats;
use gpsig_core::model::Model;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "gpsig-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: Model,
    /// Normalization fitted on the training data, applied to any data the
    /// model is evaluated on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}: malformed checkpoint: {1}")]
    Parse(String, serde_json::Error),
    #[error("{path}: expected {FORMAT} version {VERSION}, found {format} version {version}")]
    Version {
        path: String,
        format: String,
        version: u32,
    },
    #[error("{0}: invalid model: {1}")]
    Invalid(String, gpsig_core::Error),
}

impl Checkpoint {
    pub fn new(model: Model, normalization: Option<NormStats>) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            model,
            normalization,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let name = path.display().to_string();
        let text = serde_json::to_string_pretty(self).map_err(|e| CheckpointError::Parse(name.clone(), e))?;
        fs::write(path, text).map_err(|e| CheckpointError::Io(name, e))
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| CheckpointError::Io(name.clone(), e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| CheckpointError::Parse(name.clone(), e))?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(CheckpointError::Version {
                path: name,
                format: ck.format,
                version: ck.version,
            });
        }
        ck.model.validate().map_err(|e| CheckpointError::Invalid(name, e))?;
        Ok(ck)
    }
}
