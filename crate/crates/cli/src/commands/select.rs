use clap::Parser;
use comet::concepts::{random_masks, select_top_masks};
use comet::interpret::{class_global_importance, ScoreTransform};
use comet::model::{train, CometModel, Split};
use comet::rng::stream;
use serde::Serialize;

use crate::config::RunArgs;
use crate::error::{CliError, CliResult};
use crate::report::OutDir;
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
pub struct Args {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of random feature subsets to try
    #[arg(long)]
    pub n_random: usize,
    /// Features per random subset
    #[arg(long)]
    pub bits: usize,
    /// Number of subsets to keep
    #[arg(long)]
    pub keep: usize,
}

#[derive(Debug, Serialize)]
struct MaskScore {
    concept: String,
    features: Vec<usize>,
    score: f64,
    selected: bool,
}

pub fn run(args: Args) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    if args.n_random == 0 || args.keep == 0 {
        return Err(CliError::config("--n-random and --keep must be >= 1"));
    }
    if args.keep > args.n_random {
        return Err(CliError::config(format!("--keep {} exceeds --n-random {}", args.keep, args.n_random)));
    }
    let mut ws = Workspace::load(&cfg)?;
    if args.bits == 0 || args.bits > ws.dim {
        return Err(CliError::config(format!("--bits {} must be in 1..={}", args.bits, ws.dim)));
    }
    if cfg.model.standardize {
        ws.standardize_with(&comet::data::Standardizer::fit(&ws.splits.train))?;
    }
    let masks = random_masks(ws.dim, args.n_random, args.bits, &mut stream(cfg.seed, "random-masks", 0))?;
    let concepts = if cfg.model.whole_input { masks.with_whole_input() } else { masks.clone() };
    let model = CometModel::new(concepts, &cfg.model.model_config(), &mut stream(cfg.seed, "init", 0))?;
    let outcome = train(model, &ws.splits.train, Some(Split::new(&ws.splits.val)), cfg.episode, &cfg.train)?;
    let gis = class_global_importance(
        &outcome.model,
        &ws.splits.val,
        cfg.episode,
        cfg.train.eval_episodes,
        cfg.seed,
        ScoreTransform::Negation,
    )?;
    let drawn: Vec<_> = gis.iter().flatten().collect();
    let mut scores = vec![0.0; masks.len()];
    for gi in &drawn {
        for (s, v) in scores.iter_mut().zip(&gi.scores) {
            *s += v / drawn.len() as f64;
        }
    }
    let selected = select_top_masks(&masks, &scores, args.keep)?;

    let records: Vec<MaskScore> = masks
        .masks()
        .iter()
        .zip(&scores)
        .map(|(m, &score)| MaskScore { concept: m.name.clone(), features: m.indices(), score, selected: selected.position(&m.name).is_some() })
        .collect();
    let out = OutDir::create(&cfg.output_dir())?;
    selected.save(out.path("selected_concepts.txt"))?;
    out.jsonl("select_scores.jsonl", &records)?;
    if args.run.csv {
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| vec![r.concept.clone(), r.score.to_string(), r.selected.to_string()])
            .collect();
        out.csv("select_scores.csv", &["concept", "score", "selected"], &rows)?;
    }
    for m in selected.masks() {
        let s = records.iter().find(|r| r.concept == m.name).map_or(f64::NAN, |r| r.score);
        println!("{} score={s:.6} features={:?}", m.name, m.indices());
    }
    Ok(())
}
