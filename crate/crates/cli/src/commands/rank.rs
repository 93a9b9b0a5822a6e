use std::path::PathBuf;

use clap::Parser;
use comet::interpret::rank_examples_by_concept;
use serde::Serialize;

use super::{class_by_name, full_class_bank, rows_of_class};
use crate::config::{require_file, RunArgs};
use crate::error::{CliError, CliResult};
use crate::report::OutDir;
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
pub struct Args {
    #[command(flatten)]
    pub run: RunArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Split to rank: train, val or test
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Class whose examples are ranked
    #[arg(long, value_name = "NAME")]
    pub class: String,
    /// Concept whose embedding distance orders the examples
    #[arg(long, value_name = "NAME")]
    pub concept: String,
    /// List the farthest examples first
    #[arg(long)]
    pub farthest: bool,
}

#[derive(Debug, Serialize)]
struct RankRecord {
    rank: usize,
    row: usize,
    distance: f64,
}

pub fn run(args: Args) -> CliResult<()> {
    let cfg = args.run.resolve()?;
    cfg.validate()?;
    require_file("checkpoint", &args.checkpoint)?;
    let mut ws = Workspace::load(&cfg)?;
    let (_, model) = ws.load_checkpoint(&cfg, &args.checkpoint)?;
    let ds = ws.split(&args.split)?;
    let class = class_by_name(ds, &args.class)?;
    let concept = model.concepts.position(&args.concept).ok_or_else(|| {
        let names: Vec<&str> = model.concepts.masks().iter().map(|m| m.name.as_str()).collect();
        CliError::config(format!("unknown concept '{}'; available: {}", args.concept, names.join(", ")))
    })?;

    let rows = rows_of_class(ds, class);
    let bank = full_class_bank(&model, ds, &[class])?;
    let mut ranked = rank_examples_by_concept(&model, &bank.protos[0][concept], &ds.x.select_rows(&rows), concept)?;
    if args.farthest {
        ranked.reverse();
    }
    let records: Vec<RankRecord> = ranked
        .iter()
        .enumerate()
        .map(|(i, r)| RankRecord { rank: i + 1, row: rows[r.index], distance: r.distance })
        .collect();

    let out = OutDir::create(&cfg.output_dir())?;
    out.jsonl("rank.jsonl", &records)?;
    if args.run.csv {
        let table: Vec<Vec<String>> = records
            .iter()
            .map(|r| vec![r.rank.to_string(), r.row.to_string(), r.distance.to_string()])
            .collect();
        out.csv("rank.csv", &["rank", "row", "distance"], &table)?;
    }
    for r in &records {
        println!("{} row={} distance={:.6}", r.rank, r.row, r.distance);
    }
    Ok(())
}
