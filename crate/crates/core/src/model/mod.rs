//! Concept learners, concept prototypes, and summed-distance classification.
//!
//! A [`CometModel`] owns one embedding network per concept (or a single
//! network shared by all concepts). Class `k` is represented by the
//! prototypes `p[k][j]`, the mean concept-`j` embedding of its support
//! examples, and a query is scored against class `k` by
//! `−Σ_j d(f_j(x ∘ c_j), p[k][j])`.

mod checkpoint;
mod ensemble;
mod episode;
mod train;

use serde::{Deserialize, Serialize};

use crate::concepts::{apply_mask_rows, ConceptSet};
use crate::data::Dataset;
use crate::error::{check_dim, CometError, Result};
use crate::nn::{
    argmax, distance_unchecked, mlp_forward, softmax, DistanceKind, ForwardCache, ForwardMode,
    Matrix, MlpDims, MlpParams,
};
use crate::rng::{stream, RngStream};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use ensemble::{ensemble_predict, evaluate_ensemble, train_ensemble, vote, EnsembleEval};
pub use episode::{episode_gradients, episode_loss, EpisodeGradients};
pub use train::{evaluate, evaluate_with, train, EvalResult, TrainConfig, TrainLogRecord, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    SharedAcrossConcepts,
    #[default]
    PerConcept,
}

impl std::str::FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "shared" | "shared_across_concepts" => Ok(WeightMode::SharedAcrossConcepts),
            "per_concept" | "per-concept" => Ok(WeightMode::PerConcept),
            other => Err(format!("unknown weight mode '{other}' (expected shared or per_concept)")),
        }
    }
}

/// Architecture options for the concept learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout: f64,
    pub weight_mode: WeightMode,
    pub distance: DistanceKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            embed_dim: 64,
            dropout: 0.2,
            weight_mode: WeightMode::PerConcept,
            distance: DistanceKind::SquaredEuclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CometModel {
    pub concepts: ConceptSet,
    pub weight_mode: WeightMode,
    pub nets: Vec<MlpParams>,
    pub distance: DistanceKind,
}

/// Concept embeddings of a batch: `per_concept[j]` is `n × M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptEmbeddings {
    pub per_concept: Vec<Matrix>,
}

impl ConceptEmbeddings {
    pub fn rows(&self) -> usize {
        self.per_concept.first().map_or(0, Matrix::rows)
    }

    pub fn get(&self, concept: usize, row: usize) -> &[f64] {
        self.per_concept[concept].row(row)
    }
}

/// Per-example concept visibility (`rows × N`), aligned with dataset rows.
/// An invisible concept embedding is replaced by the example's whole-input
/// embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub rows: Vec<Vec<bool>>,
}

/// A dataset split, optionally with concept visibility.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub data: &'a Dataset,
    pub visibility: Option<&'a Visibility>,
}

impl<'a> Split<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Split { data, visibility: None }
    }

    pub fn with_visibility(mut self, vis: &'a Visibility) -> Self {
        self.visibility = Some(vis);
        self
    }

    pub(crate) fn visibility_rows(&self, rows: &[usize]) -> Option<Vec<Vec<bool>>> {
        self.visibility.map(|v| rows.iter().map(|&r| v.rows[r].clone()).collect())
    }
}

impl<'a> From<&'a Dataset> for Split<'a> {
    fn from(data: &'a Dataset) -> Self {
        Split::new(data)
    }
}

/// Concept prototypes for the classes of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    /// `protos[k][j]` = prototype of class position `k` for concept `j`.
    pub protos: Vec<Vec<Vec<f64>>>,
    /// Dataset class id at each position.
    pub classes: Vec<usize>,
}

impl PrototypeBank {
    pub fn way(&self) -> usize {
        self.protos.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.protos.first().map_or(0, Vec::len)
    }

    pub fn position_of(&self, class_id: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == class_id)
    }
}

pub fn eval_rng() -> RngStream {
    stream(0, "eval-mode", 0)
}

impl CometModel {
    pub fn new(concepts: ConceptSet, cfg: &ModelConfig, rng: &mut RngStream) -> Result<Self> {
        let dims = MlpDims { input: concepts.dim(), hidden: cfg.hidden, output: cfg.embed_dim };
        let n_nets = match cfg.weight_mode {
            WeightMode::SharedAcrossConcepts => 1,
            WeightMode::PerConcept => concepts.len(),
        };
        let nets = (0..n_nets)
            .map(|_| MlpParams::init(dims, cfg.dropout, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(CometModel { concepts, weight_mode: cfg.weight_mode, nets, distance: cfg.distance })
    }

    /// Builds from explicit parameters, checking architecture consistency.
    pub fn from_parts(
        concepts: ConceptSet,
        weight_mode: WeightMode,
        nets: Vec<MlpParams>,
        distance: DistanceKind,
    ) -> Result<Self> {
        let expected = match weight_mode {
            WeightMode::SharedAcrossConcepts => 1,
            WeightMode::PerConcept => concepts.len(),
        };
        check_dim("number of concept networks", expected, nets.len())?;
        for net in &nets {
            net.validate()?;
            check_dim("network input width", concepts.dim(), net.dims().input)?;
            if net.dims() != nets[0].dims() {
                return Err(CometError::validation("concept networks", "architectures differ"));
            }
        }
        Ok(CometModel { concepts, weight_mode, nets, distance })
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn dims(&self) -> MlpDims {
        self.nets[0].dims()
    }

    pub fn embed_dim(&self) -> usize {
        self.dims().output
    }

    /// Network used by concept `j`.
    pub fn net_for(&self, j: usize) -> &MlpParams {
        match self.weight_mode {
            WeightMode::SharedAcrossConcepts => &self.nets[0],
            WeightMode::PerConcept => &self.nets[j],
        }
    }

    /// Eval-mode embedding of every row of `x` under concept `j` alone.
    pub fn embed_concept(&self, j: usize, x: &Matrix) -> Result<Matrix> {
        let mask = self.concepts.get(j).ok_or(CometError::Index {
            context: "concept id",
            index: j,
            len: self.n_concepts(),
        })?;
        let xm = apply_mask_rows(x, mask)?;
        Ok(mlp_forward(self.net_for(j), &xm, ForwardMode::Eval, &mut eval_rng())?.0)
    }

    /// Embeds every row of `x` under every concept.
    ///
    /// In shared mode all masked copies go through the network as one
    /// stacked batch, so train-mode batch statistics pool over concepts.
    pub fn embed(&self, x: &Matrix, mode: ForwardMode, rng: &mut RngStream) -> Result<ConceptEmbeddings> {
        Ok(self.embed_with_caches(x, mode, rng)?.0)
    }

    pub(crate) fn embed_with_caches(
        &self,
        x: &Matrix,
        mode: ForwardMode,
        rng: &mut RngStream,
    ) -> Result<(ConceptEmbeddings, Vec<ForwardCache>)> {
        check_dim("input width", self.concepts.dim(), x.cols())?;
        let n = x.rows();
        let masked: Vec<Matrix> = self
            .concepts
            .masks()
            .iter()
            .map(|m| apply_mask_rows(x, m))
            .collect::<Result<_>>()?;
        match self.weight_mode {
            WeightMode::PerConcept => {
                let mut per_concept = Vec::with_capacity(masked.len());
                let mut caches = Vec::with_capacity(masked.len());
                for (net, xm) in self.nets.iter().zip(&masked) {
                    let (e, c) = mlp_forward(net, xm, mode, rng)?;
                    per_concept.push(e);
                    caches.push(c);
                }
                Ok((ConceptEmbeddings { per_concept }, caches))
            }
            WeightMode::SharedAcrossConcepts => {
                let mut data = Vec::with_capacity(n * x.cols() * masked.len());
                for xm in &masked {
                    data.extend_from_slice(xm.as_slice());
                }
                let stacked = Matrix::from_vec(n * masked.len(), x.cols(), data)?;
                let (e, c) = mlp_forward(&self.nets[0], &stacked, mode, rng)?;
                let per_concept = (0..masked.len())
                    .map(|j| e.select_rows(&(j * n..(j + 1) * n).collect::<Vec<_>>()))
                    .collect();
                Ok((ConceptEmbeddings { per_concept }, vec![c]))
            }
        }
    }
}

/// Replaces the concept embeddings marked invisible by the same example's
/// whole-input embedding. `visibility[i][j]` refers to row `i` of `emb`.
pub fn substitute_missing_concept(
    model: &CometModel,
    emb: &mut ConceptEmbeddings,
    visibility: Option<&[Vec<bool>]>,
) -> Result<()> {
    let Some(vis) = visibility else {
        return Ok(());
    };
    let whole = model.concepts.whole_input_id().ok_or_else(|| {
        CometError::validation("visibility", "concept set has no whole-input concept to substitute")
    })?;
    check_dim("visibility rows", emb.rows(), vis.len())?;
    for (i, row) in vis.iter().enumerate() {
        check_dim("visibility columns", model.n_concepts(), row.len())?;
        for (j, &visible) in row.iter().enumerate() {
            if !visible && j != whole {
                let w = emb.per_concept[whole].row(i).to_vec();
                emb.per_concept[j].row_mut(i).copy_from_slice(&w);
            }
        }
    }
    Ok(())
}

/// Means of the support embeddings. `support[k]` lists rows of `emb`.
pub(crate) fn prototypes_from_embeddings(emb: &ConceptEmbeddings, support: &[Vec<usize>]) -> Result<Vec<Vec<Vec<f64>>>> {
    support
        .iter()
        .enumerate()
        .map(|(k, rows)| {
            if rows.is_empty() {
                return Err(CometError::validation("support set", format!("class position {k} has no examples")));
            }
            Ok(emb
                .per_concept
                .iter()
                .map(|e| {
                    let mut p = vec![0.0; e.cols()];
                    for &r in rows {
                        for (a, v) in p.iter_mut().zip(e.row(r)) {
                            *a += v;
                        }
                    }
                    p.iter_mut().for_each(|a| *a /= rows.len() as f64);
                    p
                })
                .collect())
        })
        .collect()
}

/// Prototypes of each support class. `support[k]` holds dataset rows of
/// the `k`-th class; `classes[k]` its class id.
pub fn compute_prototypes<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    classes: &[usize],
    support: &[Vec<usize>],
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<PrototypeBank> {
    let split = split.into();
    check_dim("support classes", classes.len(), support.len())?;
    if let Some(k) = support.iter().position(Vec::is_empty) {
        return Err(CometError::validation("support set", format!("class position {k} has no examples")));
    }
    let rows: Vec<usize> = support.iter().flatten().copied().collect();
    let x = split.data.x.select_rows(&rows);
    let mut emb = model.embed(&x, mode, rng)?;
    substitute_missing_concept(model, &mut emb, split.visibility_rows(&rows).as_deref())?;
    let mut local = Vec::with_capacity(support.len());
    let mut next = 0;
    for s in support {
        local.push((next..next + s.len()).collect::<Vec<_>>());
        next += s.len();
    }
    Ok(PrototypeBank { protos: prototypes_from_embeddings(&emb, &local)?, classes: classes.to_vec() })
}

pub(crate) fn scores_from_embeddings(model: &CometModel, bank: &PrototypeBank, emb: &ConceptEmbeddings, row: usize) -> Vec<f64> {
    bank.protos
        .iter()
        .map(|class_protos| {
            -class_protos
                .iter()
                .enumerate()
                .map(|(j, p)| distance_unchecked(model.distance, emb.get(j, row), p))
                .sum::<f64>()
        })
        .collect()
}

fn check_bank(model: &CometModel, bank: &PrototypeBank) -> Result<()> {
    for class_protos in &bank.protos {
        check_dim("prototype concepts", model.n_concepts(), class_protos.len())?;
        for p in class_protos {
            check_dim("prototype width", model.embed_dim(), p.len())?;
        }
    }
    Ok(())
}

/// `−Σ_j d(f_j(x ∘ c_j), p[k][j])` for every class of `bank`, for each row of `xq`.
pub fn class_neg_scores_batch(
    model: &CometModel,
    bank: &PrototypeBank,
    xq: &Matrix,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<Vec<Vec<f64>>> {
    check_bank(model, bank)?;
    let emb = model.embed(xq, mode, rng)?;
    Ok((0..xq.rows()).map(|r| scores_from_embeddings(model, bank, &emb, r)).collect())
}

pub fn class_neg_scores(
    model: &CometModel,
    bank: &PrototypeBank,
    x_q: &[f64],
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let xq = Matrix::from_vec(1, x_q.len(), x_q.to_vec())?;
    Ok(class_neg_scores_batch(model, bank, &xq, mode, rng)?.remove(0))
}

/// Class distribution for one query (eval mode).
pub fn predict_proba(model: &CometModel, bank: &PrototypeBank, x_q: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax(&class_neg_scores(model, bank, x_q, ForwardMode::Eval, &mut eval_rng())?))
}

/// Position of the most probable class; ties go to the lowest position.
pub fn predict(model: &CometModel, bank: &PrototypeBank, x_q: &[f64]) -> Result<usize> {
    Ok(argmax(&predict_proba(model, bank, x_q)?))
}

/// ProtoNet as the single whole-input-concept model.
pub fn protonet(dim: usize, cfg: &ModelConfig, rng: &mut RngStream) -> Result<CometModel> {
    CometModel::new(ConceptSet::whole_input(dim)?, cfg, rng)
}
