//! Versioned JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CometModel, WeightMode};
use crate::concepts::ConceptSet;
use crate::data::Standardizer;
use crate::error::{CometError, Result};
use crate::nn::{DistanceKind, MlpDims, MlpParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "comet-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: MlpDims,
    pub weight_mode: WeightMode,
    pub distance: DistanceKind,
    pub concept_set_hash: String,
    pub concepts: ConceptSet,
    pub nets: Vec<MlpParams>,
    /// Feature scaling fitted on the training split, if any.
    #[serde(default)]
    pub standardizer: Option<Standardizer>,
    #[serde(default)]
    pub best_val_acc: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &CometModel) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dims: model.dims(),
            weight_mode: model.weight_mode,
            distance: model.distance,
            concept_set_hash: model.concepts.content_hash(),
            concepts: model.concepts.clone(),
            nets: model.nets.clone(),
            standardizer: None,
            best_val_acc: None,
            seed: 0,
        }
    }

    /// Rebuilds the model, checking version, hash, and architecture.
    pub fn into_model(self) -> Result<CometModel> {
        if self.format != FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CometError::Checkpoint(format!(
                "unsupported checkpoint '{}' version {} (expected '{FORMAT}' version {CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        if self.concepts.content_hash() != self.concept_set_hash {
            return Err(CometError::Checkpoint("stored concept set does not match its hash".into()));
        }
        let model = CometModel::from_parts(self.concepts, self.weight_mode, self.nets, self.distance)?;
        if model.dims() != self.dims {
            return Err(CometError::Checkpoint("network dims disagree with header".into()));
        }
        Ok(model)
    }

    /// Refuses to proceed when `concepts` differs from the trained set.
    pub fn check_concepts(&self, concepts: &ConceptSet) -> Result<()> {
        let h = concepts.content_hash();
        if h != self.concept_set_hash {
            return Err(CometError::Checkpoint(format!(
                "concept set hash {h} does not match checkpoint hash {}",
                self.concept_set_hash
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| CometError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CometError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CometError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CometError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
