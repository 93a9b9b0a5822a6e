use clap::{Parser, ValueEnum};
use comet::concepts::ConceptSet;
use comet::exec::Execution;
use comet::interpret::{class_global_importance, ScoreTransform};
use comet::model::{evaluate, train, CometModel, Split};
use comet::rng::stream;
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::config::{RunArgs, RunConfig};
use crate::error::{CliError, CliResult};
use crate::report::{percent_ci, OutDir};
use crate::workspace::Workspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Order {
    /// Concept file order
    Given,
    /// Seeded random permutation
    Random,
    /// Descending validation global importance of a model trained on all concepts
    Importance,
}

#[derive(Debug, Parser)]
pub struct Args {
    #[command(flatten)]
    pub run: RunArgs,
    /// Ascending concept counts, each including the whole-input concept
    #[arg(long, value_delimiter = ',', required = true)]
    pub counts: Vec<usize>,
    /// Order in which concepts are added
    #[arg(long, value_enum, default_value_t = Order::Given)]
    pub order: Order,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    count: usize,
    concepts: Vec<String>,
    mean_accuracy: f64,
    ci95_halfwidth: f64,
    best_val_acc: Option<f64>,
}

/// Trains from the root seed's init stream and evaluates on the test split.
fn train_and_eval(ws: &Workspace, cfg: &RunConfig, concepts: ConceptSet) -> CliResult<(CometModel, Option<f64>, f64, f64)> {
    let model = CometModel::new(concepts, &cfg.model.model_config(), &mut stream(cfg.seed, "init", 0))?;
    let outcome = train(model, &ws.splits.train, Some(Split::new(&ws.splits.val)), cfg.episode, &cfg.train)?;
    let r = evaluate(&outcome.model, &ws.splits.test, cfg.episode, cfg.train.eval_episodes, cfg.seed)?;
    Ok((outcome.model, outcome.best_val_acc, r.mean_accuracy, r.ci95_halfwidth))
}

pub fn run(args: Args) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    if cfg.model.protonet {
        return Err(CliError::config("sweep-concepts varies the concept set; --protonet does not apply"));
    }
    let mut ws = Workspace::load(&cfg)?;
    if cfg.model.standardize {
        ws.standardize_with(&comet::data::Standardizer::fit(&ws.splits.train))?;
    }
    let source = ws
        .source_concepts
        .clone()
        .ok_or_else(|| CliError::config("sweep-concepts needs a concepts file or synthetic data"))?;
    // the whole-input concept is always retained, so it is not a sweep candidate
    let candidates: Vec<usize> = (0..source.len()).filter(|&j| !source.masks()[j].is_all_ones()).collect();
    let counts = &args.counts;
    if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config("--counts must be strictly ascending and >= 1"));
    }
    let max = *counts.last().expect("non-empty counts");
    if max > candidates.len() + 1 {
        return Err(CliError::config(format!(
            "count {max} exceeds the {} available concepts plus the whole-input concept",
            candidates.len()
        )));
    }

    let order: Vec<usize> = match args.order {
        Order::Given => candidates.clone(),
        Order::Random => {
            let mut o = candidates.clone();
            o.shuffle(&mut stream(cfg.seed, "concept-order", 0));
            o
        }
        Order::Importance => {
            let full = source.subset(&candidates)?.with_whole_input();
            let (model, ..) = train_and_eval(&ws, &cfg, full)?;
            let gis = class_global_importance(
                &model,
                &ws.splits.val,
                cfg.episode,
                cfg.train.eval_episodes,
                cfg.seed,
                ScoreTransform::Negation,
            )?;
            let mut mean = vec![0.0; candidates.len()];
            let drawn: Vec<_> = gis.iter().flatten().collect();
            for gi in &drawn {
                for (m, s) in mean.iter_mut().zip(&gi.scores) {
                    *m += s / drawn.len() as f64;
                }
            }
            let mut idx: Vec<usize> = (0..candidates.len()).collect();
            idx.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
            idx.into_iter().map(|i| candidates[i]).collect()
        }
    };

    let sets: Vec<ConceptSet> = counts
        .iter()
        .map(|&c| {
            Ok(if c == 1 {
                ConceptSet::whole_input(ws.dim)?
            } else {
                source.subset(&order[..c - 1])?.with_whole_input()
            })
        })
        .collect::<CliResult<_>>()?;
    let results = Execution::default().map(sets.len(), |i| train_and_eval(&ws, &cfg, sets[i].clone()));
    let mut rows = Vec::with_capacity(sets.len());
    for ((&count, set), res) in counts.iter().zip(&sets).zip(results) {
        let (_, best_val_acc, mean_accuracy, ci95_halfwidth) = res?;
        rows.push(SweepRow {
            count,
            concepts: set.masks().iter().map(|m| m.name.clone()).collect(),
            mean_accuracy,
            ci95_halfwidth,
            best_val_acc,
        });
    }

    let out = OutDir::create(&cfg.output_dir())?;
    out.jsonl("sweep.jsonl", &rows)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.count.to_string(), r.mean_accuracy.to_string(), r.ci95_halfwidth.to_string()])
        .collect();
    out.csv("sweep.csv", &["count", "mean_accuracy", "ci95_halfwidth"], &table)?;
    println!("count accuracy");
    for r in &rows {
        println!("{} {}", r.count, percent_ci(r.mean_accuracy, r.ci95_halfwidth));
    }
    Ok(())
}
