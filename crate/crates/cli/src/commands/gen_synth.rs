use clap::Parser;
use comet::data::{make_synthetic, SyntheticSpec};

use crate::config::RunArgs;
use crate::error::{CliError, CliResult};
use crate::report::OutDir;

#[derive(Debug, Parser)]
pub struct Args {
    #[command(flatten)]
    pub run: RunArgs,
}

pub fn run(args: Args) -> CliResult<()> {
    let mut cfg = args.run.resolve()?;
    if cfg.data.is_some() {
        return Err(CliError::config("gen-synth takes a synthetic spec, not dataset files"));
    }
    let spec = cfg.synthetic.get_or_insert_with(SyntheticSpec::default);
    if let Some(seed) = args.run.seed {
        spec.seed = seed;
    }
    let spec = spec.clone();
    cfg.validate()?;
    let (ds, concepts, truth) = make_synthetic(&spec)?;
    let split = spec.default_split(&ds.class_names);
    let gt = truth.to_concepts_file(&ds.class_names, &concepts);

    let out = OutDir::create(&cfg.output_dir())?;
    ds.write(out.path("features.csv"), out.path("labels.csv"))?;
    concepts.save(out.path("concepts.txt"))?;
    out.write("ground_truth_concepts.txt", &gt.to_text())?;
    split.save(out.path("splits.json"))?;
    println!(
        "rows={} features={} classes={} concepts={} seed={} out={}",
        ds.len(),
        ds.dim(),
        ds.n_classes(),
        concepts.len(),
        spec.seed,
        cfg.output_dir().display()
    );
    Ok(())
}
