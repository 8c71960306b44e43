use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::HeadParams;
use crate::model::{HybridModel, ModelSpec};
use crate::qcnn::QcnnParams;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: ModelSpec,
    /// Original dataset class ids, in remapped order.
    pub classes: Vec<u8>,
    /// Flat quantum angles in block order.
    pub quantum: Vec<f64>,
    pub heads: HeadParams,
    pub param_count: usize,
}

impl Checkpoint {
    pub fn from_model(model: &HybridModel, classes: &[u8]) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            spec: model.spec.clone(),
            classes: classes.to_vec(),
            quantum: model.quantum.to_flat(),
            heads: model.heads.clone(),
            param_count: model.param_count(),
        }
    }

    pub fn to_model(&self) -> Result<HybridModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let quantum = QcnnParams::from_flat(&self.quantum)?;
        let model = HybridModel::from_parts(self.spec.clone(), quantum, self.heads.clone())?;
        if model.param_count() != self.param_count {
            return Err(Error::Checkpoint(format!(
                "stored parameter count {} does not match {}",
                self.param_count,
                model.param_count()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
