use std::path::PathBuf;

use clap::Parser;
use comet::data::Standardizer;
use comet::model::{evaluate, train as train_model, Checkpoint, CometModel, Split};
use comet::rng::{derive_seed, stream};
use serde::Serialize;

use crate::config::{require_file, RunArgs};
use crate::error::CliResult;
use crate::report::{percent_ci, OutDir};
use crate::workspace::{warn, Workspace};

#[derive(Debug, Parser)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Parser)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Split to evaluate on: train, val or test
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub episodes: usize,
    pub best_episode: usize,
    pub best_val_acc: Option<f64>,
    /// Seed of the validation episodes; `eval --split val --seed` with it
    /// and `--eval-episodes` = `val_episodes` reproduces `best_val_acc`.
    pub val_seed: u64,
    pub val_episodes: usize,
    pub n_concepts: usize,
    pub concept_set_hash: String,
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    let mut ws = Workspace::load(&cfg)?;
    let concepts = ws.model_concepts(&cfg)?;
    let standardizer = cfg.model.standardize.then(|| Standardizer::fit(&ws.splits.train));
    if let Some(s) = &standardizer {
        ws.standardize_with(s)?;
    }
    if cfg.train.episodes == 0 {
        warn("--episodes 0: writing the initial weights without training");
    }
    let model = CometModel::new(concepts, &cfg.model.model_config(), &mut stream(cfg.seed, "init", 0))?;
    let outcome = train_model(model, &ws.splits.train, Some(Split::new(&ws.splits.val)), cfg.episode, &cfg.train)?;

    let mut ckpt = Checkpoint::from_model(&outcome.model);
    ckpt.standardizer = standardizer;
    ckpt.best_val_acc = outcome.best_val_acc;
    ckpt.seed = cfg.seed;
    let summary = TrainSummary {
        episodes: cfg.train.episodes,
        best_episode: outcome.best_episode,
        best_val_acc: outcome.best_val_acc,
        val_seed: derive_seed(cfg.seed, "validation", 0),
        val_episodes: cfg.train.val_episodes,
        n_concepts: outcome.model.n_concepts(),
        concept_set_hash: ckpt.concept_set_hash.clone(),
    };

    let out = OutDir::create(&cfg.output_dir())?;
    ckpt.save(out.path("checkpoint.json"))?;
    out.jsonl("train_log.jsonl", &outcome.log)?;
    out.json("train_summary.json", &summary)?;
    if args.run.csv {
        let rows: Vec<Vec<String>> = outcome
            .log
            .iter()
            .map(|r| {
                vec![
                    r.episode.to_string(),
                    r.train_loss.to_string(),
                    r.train_acc.to_string(),
                    r.val_acc.map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
            .collect();
        out.csv("train_log.csv", &["episode", "train_loss", "train_acc", "val_acc"], &rows)?;
    }
    for r in &outcome.log {
        let val = r.val_acc.map(|v| format!(" val_acc={v:.4}")).unwrap_or_default();
        println!("episode={} train_loss={:.4} train_acc={:.4}{val}", r.episode, r.train_loss, r.train_acc);
    }
    println!(
        "best_episode={} best_val_acc={} concepts={}",
        summary.best_episode,
        summary.best_val_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "none".into()),
        summary.n_concepts
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalSummary<'a> {
    split: &'a str,
    episodes: usize,
    seed: u64,
    mean_accuracy: f64,
    ci95_halfwidth: f64,
    concept_set_hash: &'a str,
}

#[derive(Debug, Serialize)]
struct EpisodeAccuracy {
    episode: usize,
    accuracy: f64,
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    require_file("checkpoint", &args.checkpoint)?;
    let mut ws = Workspace::load(&cfg)?;
    let (ckpt, model) = ws.load_checkpoint(&cfg, &args.checkpoint)?;
    let split = ws.split(&args.split)?;
    let episodes = cfg.train.eval_episodes;
    let r = evaluate(&model, split, cfg.episode, episodes, cfg.seed)?;

    let summary = EvalSummary {
        split: &args.split,
        episodes,
        seed: cfg.seed,
        mean_accuracy: r.mean_accuracy,
        ci95_halfwidth: r.ci95_halfwidth,
        concept_set_hash: &ckpt.concept_set_hash,
    };
    let per: Vec<EpisodeAccuracy> = r
        .per_episode_accuracy
        .iter()
        .enumerate()
        .map(|(episode, &accuracy)| EpisodeAccuracy { episode, accuracy })
        .collect();
    let mut lines = vec![serde_json::to_string(&summary).expect("summary serializes")];
    lines.extend(per.iter().map(|p| serde_json::to_string(p).expect("record serializes")));

    let out = OutDir::create(&cfg.output_dir())?;
    out.write("eval_report.jsonl", &(lines.join("\n") + "\n"))?;
    if args.run.csv {
        let rows: Vec<Vec<String>> =
            per.iter().map(|p| vec![p.episode.to_string(), p.accuracy.to_string()]).collect();
        out.csv("eval_episodes.csv", &["episode", "accuracy"], &rows)?;
    }
    println!(
        "{} accuracy: {} ({} episodes, {}-way {}-shot)",
        args.split,
        percent_ci(r.mean_accuracy, r.ci95_halfwidth),
        episodes,
        cfg.episode.way,
        cfg.episode.shot
    );
    Ok(())
}
