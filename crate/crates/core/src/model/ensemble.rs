//! Majority-voting ensemble of independently trained ProtoNets.

use super::{
    class_neg_scores_batch, compute_prototypes, eval_rng, protonet, train, CometModel, EvalResult,
    ModelConfig, PrototypeBank, Split, TrainConfig, TrainOutcome,
};
use crate::episodes::{EpisodeSampler, EpisodeSpec};
use crate::error::{check_dim, CometError, Result};
use crate::exec::Execution;
use crate::nn::{argmax, softmax, ForwardMode};
use crate::rng::{derive_seed, stream};

/// Plurality vote over per-member class distributions. Ties go to the tied
/// class with the highest summed probability, then to the lowest position.
pub fn vote(member_probs: &[Vec<f64>]) -> Result<usize> {
    let first = member_probs
        .first()
        .ok_or_else(|| CometError::validation("ensemble", "no members"))?;
    let way = first.len();
    let mut votes = vec![0usize; way];
    let mut mass = vec![0.0; way];
    for p in member_probs {
        check_dim("member distribution", way, p.len())?;
        votes[argmax(p)] += 1;
        for (m, v) in mass.iter_mut().zip(p) {
            *m += v;
        }
    }
    let top = *votes.iter().max().expect("way >= 1");
    let mut best: Option<usize> = None;
    for k in (0..way).filter(|&k| votes[k] == top) {
        if best.is_none_or(|b| mass[k] > mass[b]) {
            best = Some(k);
        }
    }
    Ok(best.expect("at least one class has the top vote count"))
}

pub fn ensemble_predict(models: &[CometModel], banks: &[PrototypeBank], x_q: &[f64]) -> Result<usize> {
    if models.is_empty() {
        return Err(CometError::validation("ensemble", "no members"));
    }
    check_dim("ensemble banks", models.len(), banks.len())?;
    let probs = models
        .iter()
        .zip(banks)
        .map(|(m, b)| {
            if b.classes != banks[0].classes {
                return Err(CometError::validation("ensemble", "members disagree on the episode classes"));
            }
            super::predict_proba(m, b, x_q)
        })
        .collect::<Result<Vec<_>>>()?;
    vote(&probs)
}

/// Trains `members` ProtoNets whose seeds are derived from `cfg.seed`.
pub fn train_ensemble<'a>(
    members: usize,
    dim: usize,
    model_cfg: &ModelConfig,
    train_split: Split<'a>,
    val: Option<Split<'a>>,
    spec: EpisodeSpec,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<Vec<TrainOutcome>> {
    if members == 0 {
        return Err(CometError::validation("ensemble", "needs at least one member"));
    }
    exec.map(members, |i| {
        let seed = derive_seed(cfg.seed, "ensemble-member", i as u64);
        let model = protonet(dim, model_cfg, &mut stream(seed, "init", 0))?;
        train(model, train_split, val, spec, &TrainConfig { seed, ..cfg.clone() })
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEval {
    pub ensemble: EvalResult,
    /// Each member scored alone on the same episodes.
    pub members: Vec<EvalResult>,
}

pub fn evaluate_ensemble<'a>(
    members: &[CometModel],
    split: impl Into<Split<'a>>,
    spec: EpisodeSpec,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<EnsembleEval> {
    if members.is_empty() {
        return Err(CometError::validation("ensemble", "no members"));
    }
    if episodes == 0 {
        return Err(CometError::validation("evaluation", "needs at least one episode"));
    }
    let split = split.into();
    let sampler = EpisodeSampler::new(split.data, spec)?;
    let per_episode = exec.map(episodes, |i| -> Result<(f64, Vec<f64>)> {
        let ep = sampler.sample(&mut stream(seed, "eval-episode", i as u64));
        let rows: Vec<usize> = ep.query_rows().collect();
        let xq = split.data.x.select_rows(&rows);
        let mut member_probs = Vec::with_capacity(members.len());
        for m in members {
            let bank = compute_prototypes(m, split, &ep.classes, &ep.support, ForwardMode::Eval, &mut eval_rng())?;
            let scores = class_neg_scores_batch(m, &bank, &xq, ForwardMode::Eval, &mut eval_rng())?;
            member_probs.push(scores.iter().map(|s| softmax(s)).collect::<Vec<_>>());
        }
        let n = ep.query.len() as f64;
        let mut ens_correct = 0usize;
        let mut member_correct = vec![0usize; members.len()];
        for (q, &(_, y)) in ep.query.iter().enumerate() {
            let probs: Vec<Vec<f64>> = member_probs.iter().map(|mp| mp[q].clone()).collect();
            if vote(&probs)? == y {
                ens_correct += 1;
            }
            for (c, p) in member_correct.iter_mut().zip(&probs) {
                if argmax(p) == y {
                    *c += 1;
                }
            }
        }
        Ok((ens_correct as f64 / n, member_correct.into_iter().map(|c| c as f64 / n).collect()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let ensemble = EvalResult::from_accuracies(per_episode.iter().map(|(a, _)| *a).collect());
    let members = (0..members.len())
        .map(|m| EvalResult::from_accuracies(per_episode.iter().map(|(_, v)| v[m]).collect()))
        .collect();
    Ok(EnsembleEval { ensemble, members })
}
