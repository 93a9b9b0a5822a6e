//! Episode loss and its gradient with respect to every concept learner.
//!
//! Gradients flow from the query loss through the query embeddings and,
//! via the prototype means, through the support embeddings.

use super::{
    prototypes_from_embeddings, scores_from_embeddings, substitute_missing_concept, CometModel,
    Split, WeightMode,
};
use crate::episodes::Episode;
use crate::error::Result;
use crate::nn::{
    argmax, distance_with_grad, mlp_backward, softmax_nll, ForwardCache, ForwardMode, Matrix,
    ParamGrads,
};
use crate::rng::RngStream;

#[derive(Debug, Clone)]
pub struct EpisodeGradients {
    /// Mean query negative log-likelihood.
    pub loss: f64,
    pub accuracy: f64,
    /// One entry per network of the model.
    pub grads: Vec<ParamGrads>,
    pub(crate) caches: Vec<ForwardCache>,
}

struct Layout {
    rows: Vec<usize>,
    support_local: Vec<Vec<usize>>,
    query_local: Vec<(usize, usize)>,
}

fn layout(episode: &Episode) -> Layout {
    let mut rows = Vec::new();
    let mut support_local = Vec::with_capacity(episode.support.len());
    for s in &episode.support {
        support_local.push((rows.len()..rows.len() + s.len()).collect());
        rows.extend_from_slice(s);
    }
    let mut query_local = Vec::with_capacity(episode.query.len());
    for &(r, pos) in &episode.query {
        query_local.push((rows.len(), pos));
        rows.push(r);
    }
    Layout { rows, support_local, query_local }
}

fn episode_pass<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    episode: &Episode,
    mode: ForwardMode,
    rng: &mut RngStream,
    with_grad: bool,
) -> Result<(f64, f64, Option<(Vec<ParamGrads>, Vec<ForwardCache>)>)> {
    let split = split.into();
    let lay = layout(episode);
    let x = split.data.x.select_rows(&lay.rows);
    let (mut emb, caches) = model.embed_with_caches(&x, mode, rng)?;
    let vis = split.visibility_rows(&lay.rows);
    substitute_missing_concept(model, &mut emb, vis.as_deref())?;
    let bank = super::PrototypeBank {
        protos: prototypes_from_embeddings(&emb, &lay.support_local)?,
        classes: episode.classes.clone(),
    };

    let n_query = lay.query_local.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut probs_all = Vec::with_capacity(lay.query_local.len());
    for &(r, y) in &lay.query_local {
        let scores = scores_from_embeddings(model, &bank, &emb, r);
        let (probs, l) = softmax_nll(&scores, y)?;
        loss += l;
        if argmax(&probs) == y {
            correct += 1;
        }
        probs_all.push(probs);
    }
    let loss = loss / n_query;
    let accuracy = correct as f64 / n_query;
    if !with_grad {
        return Ok((loss, accuracy, None));
    }

    let n_concepts = model.n_concepts();
    let m = model.embed_dim();
    let mut grad_emb: Vec<Matrix> = (0..n_concepts).map(|_| Matrix::zeros(lay.rows.len(), m)).collect();
    let mut grad_proto = vec![vec![vec![0.0; m]; n_concepts]; bank.way()];
    for (&(r, y), probs) in lay.query_local.iter().zip(&probs_all) {
        for (k, class_protos) in bank.protos.iter().enumerate() {
            // score_k = −Σ_j d_kj, dL/dscore_k = (p_k − [k = y]) / Q
            let g_score = (probs[k] - if k == y { 1.0 } else { 0.0 }) / n_query;
            if g_score == 0.0 {
                continue;
            }
            for (j, p) in class_protos.iter().enumerate() {
                let (_, ga, gb) = distance_with_grad(model.distance, emb.get(j, r), p);
                for (dst, g) in grad_emb[j].row_mut(r).iter_mut().zip(&ga) {
                    *dst -= g_score * g;
                }
                for (dst, g) in grad_proto[k][j].iter_mut().zip(&gb) {
                    *dst -= g_score * g;
                }
            }
        }
    }
    for (k, rows) in lay.support_local.iter().enumerate() {
        let inv = 1.0 / rows.len() as f64;
        for (j, gp) in grad_proto[k].iter().enumerate() {
            for &s in rows {
                for (dst, g) in grad_emb[j].row_mut(s).iter_mut().zip(gp) {
                    *dst += g * inv;
                }
            }
        }
    }
    if let (Some(vis), Some(whole)) = (&vis, model.concepts.whole_input_id()) {
        for (i, row) in vis.iter().enumerate() {
            for (j, &visible) in row.iter().enumerate() {
                if !visible && j != whole {
                    let moved = grad_emb[j].row(i).to_vec();
                    grad_emb[j].row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                    for (dst, g) in grad_emb[whole].row_mut(i).iter_mut().zip(&moved) {
                        *dst += g;
                    }
                }
            }
        }
    }

    let grads = match model.weight_mode {
        WeightMode::PerConcept => caches
            .iter()
            .zip(&grad_emb)
            .map(|(c, g)| mlp_backward(c, g))
            .collect::<Result<Vec<_>>>()?,
        WeightMode::SharedAcrossConcepts => {
            let mut data = Vec::with_capacity(n_concepts * lay.rows.len() * m);
            for g in &grad_emb {
                data.extend_from_slice(g.as_slice());
            }
            let stacked = Matrix::from_vec(n_concepts * lay.rows.len(), m, data)?;
            vec![mlp_backward(&caches[0], &stacked)?]
        }
    };
    Ok((loss, accuracy, Some((grads, caches))))
}

/// Mean query NLL and query accuracy of one episode.
pub fn episode_loss<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    episode: &Episode,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let (loss, acc, _) = episode_pass(model, split, episode, mode, rng, false)?;
    Ok((loss, acc))
}

pub fn episode_gradients<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    episode: &Episode,
    mode: ForwardMode,
    rng: &mut RngStream,
) -> Result<EpisodeGradients> {
    let (loss, accuracy, rest) = episode_pass(model, split, episode, mode, rng, true)?;
    let (grads, caches) = rest.expect("gradients requested");
    Ok(EpisodeGradients { loss, accuracy, grads, caches })
}
