use std::path::PathBuf;

use clap::Parser;
use comet::concepts::GroundTruthConcepts;
use comet::interpret::{class_global_importance, local_importance_with, recall_at_k, ScoreTransform};
use serde::Serialize;

use super::{class_by_name, full_class_bank};
use crate::config::{require_file, RunArgs};
use crate::error::{CliError, CliResult};
use crate::report::OutDir;
use crate::workspace::{warn, Workspace};

#[derive(Debug, Parser)]
pub struct Args {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Split to explain: train, val or test
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Restrict reports to one class (default: every class of the split)
    #[arg(long, value_name = "NAME")]
    pub class: Option<String>,
    /// Row of the split to explain locally against full-class prototypes
    #[arg(long, value_name = "ROW")]
    pub row: Option<usize>,
    /// Concepts listed per class (default: all)
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
    /// Per-class ground-truth concepts, one `class: concept ...` line each
    /// (synthetic data uses its planted blocks by default)
    #[arg(long, value_name = "FILE")]
    pub ground_truth: Option<PathBuf>,
    /// K for recall@K against the ground truth, capped at the concept count
    #[arg(long, default_value_t = 20)]
    pub recall_k: usize,
    /// Score concepts by 1/(1+d) instead of −d (same ranking)
    #[arg(long)]
    pub reciprocal: bool,
}

#[derive(Debug, Serialize)]
struct ImportanceRecord<'a> {
    class: &'a str,
    rank: usize,
    concept: &'a str,
    mean_distance: f64,
    score: f64,
}

#[derive(Debug, Serialize)]
struct LocalRecord<'a> {
    row: usize,
    class: &'a str,
    rank: usize,
    concept: &'a str,
    distance: f64,
    score: f64,
}

#[derive(Debug, Serialize)]
struct RecallRecord<'a> {
    class: &'a str,
    k: usize,
    n_truth: usize,
    recall: f64,
}

#[derive(Debug, Serialize)]
struct MacroRecall {
    k: usize,
    classes: usize,
    macro_recall: f64,
}

pub fn run(args: Args) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    require_file("checkpoint", &args.checkpoint)?;
    if let Some(g) = &args.ground_truth {
        require_file("ground-truth", g)?;
    }
    if args.top_k == Some(0) || args.recall_k == 0 {
        return Err(CliError::config("--top-k and --recall-k must be >= 1"));
    }
    let mut ws = Workspace::load(&cfg)?;
    let (_, model) = ws.load_checkpoint(&cfg, &args.checkpoint)?;
    let ds = ws.split(&args.split)?;
    let class_filter = args.class.as_deref().map(|c| class_by_name(ds, c)).transpose()?;
    let truth = match &args.ground_truth {
        Some(p) => Some(GroundTruthConcepts::load(p)?),
        None => ws.ground_truth.clone(),
    };
    let transform = if args.reciprocal { ScoreTransform::Reciprocal } else { ScoreTransform::Negation };
    let names: Vec<&str> = model.concepts.masks().iter().map(|m| m.name.as_str()).collect();
    let n = names.len();
    let top_k = args.top_k.unwrap_or(n).min(n);

    let globals = class_global_importance(&model, ds, cfg.episode, cfg.train.eval_episodes, cfg.seed, transform)?;
    let mut global_records = Vec::new();
    let mut summary_lines = Vec::new();
    for (class, gi) in globals.iter().enumerate() {
        if class_filter.is_some_and(|c| c != class) {
            continue;
        }
        let cname = ds.class_names[class].as_str();
        let Some(gi) = gi else {
            warn(&format!("class '{cname}' was not drawn in any episode; no global importance"));
            continue;
        };
        for (rank, &j) in gi.ranking.iter().take(top_k).enumerate() {
            global_records.push(ImportanceRecord {
                class: cname,
                rank: rank + 1,
                concept: names[j],
                mean_distance: gi.mean_distances[j],
                score: gi.scores[j],
            });
        }
        let top: Vec<&str> = gi.ranking.iter().take(top_k).map(|&j| names[j]).collect();
        summary_lines.push(format!("{cname}: {}", top.join(" ")));
    }

    let mut recall_records = Vec::new();
    let mut macro_recall = None;
    if let Some(truth) = &truth {
        let k = args.recall_k.min(n);
        if k < args.recall_k {
            warn(&format!("--recall-k {} exceeds the {n} concepts; using {k}", args.recall_k));
        }
        for (class, gi) in globals.iter().enumerate() {
            let cname = ds.class_names[class].as_str();
            if class_filter.is_some_and(|c| c != class) {
                continue;
            }
            let (Some(gi), Some(terms)) = (gi, truth.get(cname)) else { continue };
            let mut ids = Vec::new();
            for t in terms {
                match model.concepts.position(t) {
                    Some(id) => ids.push(id),
                    None => warn(&format!("ground truth of '{cname}' names unknown concept '{t}'")),
                }
            }
            ids.sort_unstable();
            ids.dedup();
            // classes need at least two assigned terms to be scored
            if ids.len() < 2 {
                continue;
            }
            recall_records.push(RecallRecord { class: cname, k, n_truth: ids.len(), recall: recall_at_k(gi, &ids, k)? });
        }
        if !recall_records.is_empty() {
            let m = recall_records.iter().map(|r| r.recall).sum::<f64>() / recall_records.len() as f64;
            macro_recall = Some(MacroRecall { k, classes: recall_records.len(), macro_recall: m });
        } else {
            warn("no class has at least two ground-truth concepts; recall not reported");
        }
    }

    let mut local_records = Vec::new();
    if let Some(row) = args.row {
        if row >= ds.len() {
            return Err(CliError::config(format!("--row {row} out of range: split has {} rows", ds.len())));
        }
        let class = class_filter.unwrap_or(ds.y[row]);
        let bank = full_class_bank(&model, ds, &[class])?;
        let li = local_importance_with(&model, &bank, ds.x.row(row), row, class, transform)?;
        for (rank, &j) in li.ranking.iter().take(top_k).enumerate() {
            local_records.push(LocalRecord {
                row,
                class: ds.class_names[class].as_str(),
                rank: rank + 1,
                concept: names[j],
                distance: li.distances[j],
                score: li.scores[j],
            });
        }
    }

    let out = OutDir::create(&cfg.output_dir())?;
    out.jsonl("explain_global.jsonl", &global_records)?;
    if !local_records.is_empty() {
        out.jsonl("explain_local.jsonl", &local_records)?;
    }
    if truth.is_some() {
        let mut lines: Vec<String> =
            recall_records.iter().map(|r| serde_json::to_string(r).expect("record serializes")).collect();
        if let Some(m) = &macro_recall {
            lines.push(serde_json::to_string(m).expect("record serializes"));
        }
        out.write("explain_recall.jsonl", &lines.iter().map(|l| format!("{l}\n")).collect::<String>())?;
    }
    if args.run.csv {
        let rows: Vec<Vec<String>> = global_records
            .iter()
            .map(|r| {
                vec![
                    r.class.to_string(),
                    r.rank.to_string(),
                    r.concept.to_string(),
                    r.mean_distance.to_string(),
                    r.score.to_string(),
                ]
            })
            .collect();
        out.csv("explain_global.csv", &["class", "rank", "concept", "mean_distance", "score"], &rows)?;
    }
    for l in &summary_lines {
        println!("{l}");
    }
    for r in &local_records {
        println!("row {} {}: rank {} {} distance={:.6}", r.row, r.class, r.rank, r.concept, r.distance);
    }
    for r in &recall_records {
        println!("recall@{} {}: {:.4}", r.k, r.class, r.recall);
    }
    if let Some(m) = &macro_recall {
        println!("macro recall@{} over {} classes: {:.4}", m.k, m.classes, m.macro_recall);
    }
    Ok(())
}
