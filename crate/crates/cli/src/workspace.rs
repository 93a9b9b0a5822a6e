//! Loads the data, splits and concepts a run configuration points at.

use std::path::Path;

use comet::concepts::{ConceptSet, GroundTruthConcepts};
use comet::data::{make_synthetic, split_dataset, Dataset, SplitSpec, Splits, Standardizer};
use comet::model::{Checkpoint, CometModel};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct Workspace {
    pub dim: usize,
    pub splits: Splits,
    /// Concepts from the concepts file or the synthetic generator.
    pub source_concepts: Option<ConceptSet>,
    /// Planted-block ground truth of synthetic data.
    pub ground_truth: Option<GroundTruthConcepts>,
}

impl Workspace {
    pub fn load(cfg: &RunConfig) -> CliResult<Self> {
        let (ds, split, source_concepts, ground_truth) = if let Some(spec) = &cfg.synthetic {
            let (ds, concepts, truth) = make_synthetic(spec)?;
            let split = spec.default_split(&ds.class_names);
            let gt = truth.to_concepts_file(&ds.class_names, &concepts);
            (ds, split, Some(concepts), Some(gt))
        } else {
            let d = cfg.data.as_ref().ok_or_else(|| CliError::config("no data source configured"))?;
            let ds = Dataset::load(&d.features, &d.labels)?;
            let split = SplitSpec::load(&d.splits)?;
            let concepts = cfg.concepts.as_ref().map(|p| ConceptSet::load(p, ds.dim())).transpose()?;
            (ds, split, concepts, None)
        };
        Ok(Workspace { dim: ds.dim(), splits: split_dataset(&ds, &split)?, source_concepts, ground_truth })
    }

    pub fn split(&self, name: &str) -> CliResult<&Dataset> {
        match name {
            "train" => Ok(&self.splits.train),
            "val" => Ok(&self.splits.val),
            "test" => Ok(&self.splits.test),
            other => Err(CliError::config(format!("unknown split '{other}' (expected train, val or test)"))),
        }
    }

    pub fn standardize_with(&mut self, s: &Standardizer) -> CliResult<()> {
        self.splits.train = s.apply(&self.splits.train)?;
        self.splits.val = s.apply(&self.splits.val)?;
        self.splits.test = s.apply(&self.splits.test)?;
        Ok(())
    }

    /// The concept set a model trained under `cfg` uses.
    pub fn model_concepts(&self, cfg: &RunConfig) -> CliResult<ConceptSet> {
        if cfg.model.protonet {
            if self.source_concepts.is_some() {
                warn("--protonet given: concepts are ignored and the whole-input concept is used alone");
            }
            return Ok(ConceptSet::whole_input(self.dim)?);
        }
        Ok(match &self.source_concepts {
            Some(c) if cfg.model.whole_input => c.with_whole_input(),
            Some(c) => c.clone(),
            None => {
                warn("no concepts given: training with the whole-input concept only");
                ConceptSet::whole_input(self.dim)?
            }
        })
    }

    /// Loads a checkpoint for this data, refusing a mismatched concept set
    /// and applying the stored feature scaling.
    pub fn load_checkpoint(&mut self, cfg: &RunConfig, path: &Path) -> CliResult<(Checkpoint, CometModel)> {
        let ckpt = Checkpoint::load(path)?;
        if self.source_concepts.is_some() || cfg.model.protonet {
            ckpt.check_concepts(&self.model_concepts(cfg)?)?;
        }
        if ckpt.concepts.dim() != self.dim {
            return Err(CliError::data(format!(
                "checkpoint expects {} features, data has {}",
                ckpt.concepts.dim(),
                self.dim
            )));
        }
        if let Some(s) = &ckpt.standardizer {
            self.standardize_with(s)?;
        }
        let model = ckpt.clone().into_model()?;
        Ok((ckpt, model))
    }
}

pub fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}
