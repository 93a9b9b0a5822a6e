//! Concept importance and concept-based example ranking.
//!
//! Importance is an inverted distance between a concept embedding and a
//! class's concept prototype: the closer, the more important. Only the
//! induced ranking is meaningful; [`ScoreTransform`] picks how raw
//! distances are turned into reported scores.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::episodes::{EpisodeSampler, EpisodeSpec};
use crate::error::{check_dim, CometError, Result};
use crate::model::{compute_prototypes, eval_rng, CometModel, PrototypeBank, Split};
use crate::nn::{distance_unchecked, ForwardMode, Matrix};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTransform {
    /// `−d`
    #[default]
    Negation,
    /// `1 / (1 + d)`
    Reciprocal,
}

impl ScoreTransform {
    pub fn apply(self, d: f64) -> f64 {
        match self {
            ScoreTransform::Negation => -d,
            ScoreTransform::Reciprocal => 1.0 / (1.0 + d),
        }
    }
}

/// Concept ids by descending score; ties go to the lower id.
pub fn ranking_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalImportance {
    pub query_index: usize,
    pub class_id: usize,
    pub distances: Vec<f64>,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub class_id: usize,
    pub mean_distances: Vec<f64>,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl GlobalImportance {
    pub fn from_mean_distances(class_id: usize, mean_distances: Vec<f64>, transform: ScoreTransform) -> Self {
        let scores: Vec<f64> = mean_distances.iter().map(|&d| transform.apply(d)).collect();
        let ranking = ranking_from_scores(&scores);
        GlobalImportance { class_id, mean_distances, scores, ranking }
    }
}

fn class_position(bank: &PrototypeBank, class_id: usize) -> Result<usize> {
    bank.position_of(class_id).ok_or(CometError::Index {
        context: "prototype bank classes",
        index: class_id,
        len: bank.way(),
    })
}

/// Per-concept distances of each row of `queries` to the prototypes of `pos`.
fn concept_distances(model: &CometModel, bank: &PrototypeBank, queries: &Matrix, pos: usize) -> Result<Vec<Vec<f64>>> {
    check_dim("prototype concepts", model.n_concepts(), bank.protos[pos].len())?;
    let emb = model.embed(queries, ForwardMode::Eval, &mut eval_rng())?;
    Ok((0..queries.rows())
        .map(|r| {
            bank.protos[pos]
                .iter()
                .enumerate()
                .map(|(j, p)| distance_unchecked(model.distance, emb.get(j, r), p))
                .collect()
        })
        .collect())
}

pub fn local_importance(model: &CometModel, bank: &PrototypeBank, x_q: &[f64], class_id: usize) -> Result<LocalImportance> {
    local_importance_with(model, bank, x_q, 0, class_id, ScoreTransform::Negation)
}

pub fn local_importance_with(
    model: &CometModel,
    bank: &PrototypeBank,
    x_q: &[f64],
    query_index: usize,
    class_id: usize,
    transform: ScoreTransform,
) -> Result<LocalImportance> {
    let pos = class_position(bank, class_id)?;
    let xq = Matrix::from_vec(1, x_q.len(), x_q.to_vec())?;
    let distances = concept_distances(model, bank, &xq, pos)?.remove(0);
    let scores: Vec<f64> = distances.iter().map(|&d| transform.apply(d)).collect();
    let ranking = ranking_from_scores(&scores);
    Ok(LocalImportance { query_index, class_id, distances, scores, ranking })
}

/// Averages concept distances over `queries` (rows) to the prototypes of `class_id`.
pub fn global_importance(model: &CometModel, bank: &PrototypeBank, queries: &Matrix, class_id: usize) -> Result<GlobalImportance> {
    global_importance_with(model, bank, queries, class_id, ScoreTransform::Negation)
}

pub fn global_importance_with(
    model: &CometModel,
    bank: &PrototypeBank,
    queries: &Matrix,
    class_id: usize,
    transform: ScoreTransform,
) -> Result<GlobalImportance> {
    if queries.rows() == 0 {
        return Err(CometError::validation("global importance", "query list is empty"));
    }
    let pos = class_position(bank, class_id)?;
    let per_query = concept_distances(model, bank, queries, pos)?;
    let n = per_query.len() as f64;
    let mut mean = vec![0.0; model.n_concepts()];
    for row in &per_query {
        for (m, d) in mean.iter_mut().zip(row) {
            *m += d;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(GlobalImportance::from_mean_distances(class_id, mean, transform))
}

/// Global importance of every class of `split`, pooling each class's query
/// points over `episodes` evaluation episodes (distances to the prototype
/// built from that episode's support). Classes never drawn get `None`.
pub fn class_global_importance<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    spec: EpisodeSpec,
    episodes: usize,
    seed: u64,
    transform: ScoreTransform,
) -> Result<Vec<Option<GlobalImportance>>> {
    let split = split.into();
    let ds: &Dataset = split.data;
    let sampler = EpisodeSampler::new(ds, spec)?;
    let n_concepts = model.n_concepts();
    let mut sums = vec![vec![0.0; n_concepts]; ds.n_classes()];
    let mut counts = vec![0usize; ds.n_classes()];
    for e in 0..episodes {
        let ep = sampler.sample(&mut stream(seed, "eval-episode", e as u64));
        let bank = compute_prototypes(model, split, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng())?;
        for (pos, &class) in ep.classes.iter().enumerate() {
            let rows: Vec<usize> = ep.query.iter().filter(|(_, p)| *p == pos).map(|(r, _)| *r).collect();
            let d = concept_distances(model, &bank, &ds.x.select_rows(&rows), pos)?;
            for row in d {
                for (s, v) in sums[class].iter_mut().zip(row) {
                    *s += v;
                }
                counts[class] += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(class, (s, c))| {
            (c > 0).then(|| {
                GlobalImportance::from_mean_distances(class, s.into_iter().map(|v| v / c as f64).collect(), transform)
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedExample {
    /// Position in the input list.
    pub index: usize,
    pub distance: f64,
}

/// Orders `examples` (rows) by the distance of their concept-`concept_id`
/// embedding to `proto`, nearest first. Ties keep input order.
pub fn rank_examples_by_concept(model: &CometModel, proto: &[f64], examples: &Matrix, concept_id: usize) -> Result<Vec<RankedExample>> {
    if examples.rows() == 0 {
        return Err(CometError::validation("example ranking", "example list is empty"));
    }
    check_dim("prototype width", model.embed_dim(), proto.len())?;
    let emb = model.embed_concept(concept_id, examples)?;
    let mut ranked: Vec<RankedExample> = emb
        .iter_rows()
        .enumerate()
        .map(|(index, e)| RankedExample { index, distance: distance_unchecked(model.distance, e, proto) })
        .collect();
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    Ok(ranked)
}

/// Fraction of `truth` found among the top `k` of `gi.ranking`.
pub fn recall_at_k(gi: &GlobalImportance, truth: &[usize], k: usize) -> Result<f64> {
    if truth.is_empty() {
        return Err(CometError::validation("recall@k", "ground-truth concept set is empty"));
    }
    if k == 0 || k > gi.ranking.len() {
        return Err(CometError::validation("recall@k", format!("k = {k} must be in 1..={}", gi.ranking.len())));
    }
    let top = &gi.ranking[..k];
    let mut truth = truth.to_vec();
    truth.sort_unstable();
    truth.dedup();
    let hits = truth.iter().filter(|t| top.contains(t)).count();
    Ok(hits as f64 / truth.len() as f64)
}
