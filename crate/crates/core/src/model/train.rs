use serde::{Deserialize, Serialize};

use super::episode::episode_gradients;
use super::{episode_loss, CometModel, Split};
use crate::episodes::{EpisodeSampler, EpisodeSpec};
use crate::error::{CometError, Result};
use crate::exec::Execution;
use crate::nn::{adam_step, AdamState, ForwardMode};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub eval_episodes: usize,
    /// Episodes per validation pass used for model selection.
    pub val_episodes: usize,
    pub val_every: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 1000,
            lr: 1e-3,
            weight_decay: 0.0,
            eval_episodes: 600,
            val_episodes: 100,
            val_every: 100,
            log_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("eval_episodes", self.eval_episodes),
            ("val_episodes", self.val_episodes),
            ("val_every", self.val_every),
            ("log_every", self.log_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CometError::validation("train config", format!("{name} must be >= 1")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(CometError::validation("train config", "lr must be > 0 and weight_decay >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub episode: usize,
    /// Mean training loss since the previous record.
    pub train_loss: f64,
    pub train_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot (the final parameters when there is no
    /// validation split).
    pub model: CometModel,
    pub log: Vec<TrainLogRecord>,
    pub best_val_acc: Option<f64>,
    /// Episode count at which the returned snapshot was taken.
    pub best_episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    /// `1.96 · sd / √episodes` with the population standard deviation.
    pub ci95_halfwidth: f64,
    pub per_episode_accuracy: Vec<f64>,
}

impl EvalResult {
    pub fn from_accuracies(per_episode_accuracy: Vec<f64>) -> Self {
        let n = per_episode_accuracy.len() as f64;
        let mean = per_episode_accuracy.iter().sum::<f64>() / n;
        let var = per_episode_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        EvalResult {
            mean_accuracy: mean,
            ci95_halfwidth: 1.96 * var.sqrt() / n.sqrt(),
            per_episode_accuracy,
        }
    }
}

/// Mean accuracy over `episodes` independent test episodes in eval mode.
/// Episode `i` is drawn from stream `("eval-episode", i)` under `seed`.
pub fn evaluate<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    spec: EpisodeSpec,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    evaluate_with(model, split, spec, episodes, seed, Execution::default())
}

pub fn evaluate_with<'a>(
    model: &CometModel,
    split: impl Into<Split<'a>>,
    spec: EpisodeSpec,
    episodes: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(CometError::validation("evaluation", "needs at least one episode"));
    }
    let split = split.into();
    let sampler = EpisodeSampler::new(split.data, spec)?;
    let accs = exec.map(episodes, |i| {
        let ep = sampler.sample(&mut stream(seed, "eval-episode", i as u64));
        episode_loss(model, split, &ep, ForwardMode::Eval, &mut super::eval_rng()).map(|(_, acc)| acc)
    });
    Ok(EvalResult::from_accuracies(accs.into_iter().collect::<Result<_>>()?))
}

/// Episodic training with Adam. Every `val_every` episodes (and after the
/// last) the model is scored on `val` and the best snapshot is kept; ties
/// go to the later snapshot.
pub fn train<'a>(
    model: CometModel,
    train_split: impl Into<Split<'a>>,
    val: Option<Split<'a>>,
    spec: EpisodeSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_split = train_split.into();
    let sampler = EpisodeSampler::new(train_split.data, spec)?;
    if let Some(v) = val {
        EpisodeSampler::new(v.data, spec)?;
    }
    let mut model = model;
    let mut opt: Vec<AdamState> = model
        .nets
        .iter()
        .map(|n| AdamState::new(n, cfg.lr, cfg.weight_decay))
        .collect::<Result<_>>()?;

    let mut log = Vec::new();
    let mut best: Option<(f64, CometModel, usize)> = None;
    let (mut loss_acc, mut acc_acc, mut since) = (0.0, 0.0, 0usize);
    let mut history: Vec<f64> = Vec::new();
    let val_seed = crate::rng::derive_seed(cfg.seed, "validation", 0);

    for e in 0..cfg.episodes {
        let ep = sampler.sample(&mut stream(cfg.seed, "train-episode", e as u64));
        let mut dropout_rng = stream(cfg.seed, "dropout", e as u64);
        let diverged = |loss: f64, history: &[f64]| CometError::Diverged {
            episode: e,
            seed: crate::rng::derive_seed(cfg.seed, "train-episode", e as u64),
            loss,
            history: history.iter().rev().take(10).rev().copied().collect(),
        };
        let g = match episode_gradients(&model, train_split, &ep, ForwardMode::Train, &mut dropout_rng) {
            Ok(g) => g,
            Err(CometError::NonFinite(_)) => return Err(diverged(f64::NAN, &history)),
            Err(other) => return Err(other),
        };
        if !g.loss.is_finite() {
            return Err(diverged(g.loss, &history));
        }
        history.push(g.loss);
        for ((net, cache), (grads, state)) in model
            .nets
            .iter_mut()
            .zip(&g.caches)
            .zip(g.grads.iter().zip(opt.iter_mut()))
        {
            net.update_running_stats(cache);
            adam_step(net, grads, state).map_err(|_| diverged(g.loss, &history))?;
        }
        loss_acc += g.loss;
        acc_acc += g.accuracy;
        since += 1;

        let done = e + 1;
        let last = done == cfg.episodes;
        let mut val_acc = None;
        if let Some(v) = val {
            if done % cfg.val_every == 0 || last {
                let r = evaluate(&model, v, spec, cfg.val_episodes, val_seed)?;
                if best.as_ref().is_none_or(|(b, _, _)| r.mean_accuracy >= *b) {
                    best = Some((r.mean_accuracy, model.clone(), done));
                }
                val_acc = Some(r.mean_accuracy);
            }
        }
        if done % cfg.log_every == 0 || last {
            log.push(TrainLogRecord {
                episode: done,
                train_loss: loss_acc / since as f64,
                train_acc: acc_acc / since as f64,
                val_acc,
            });
            (loss_acc, acc_acc, since) = (0.0, 0.0, 0);
        }
    }

    Ok(match best {
        Some((acc, snapshot, at)) => TrainOutcome { model: snapshot, log, best_val_acc: Some(acc), best_episode: at },
        None => TrainOutcome { model, log, best_val_acc: None, best_episode: cfg.episodes },
    })
}
