//! Trains COMET and ProtoNet on the default planted-block task and reports
//! test accuracy plus per-class global concept importance.

use comet::data::{make_synthetic, split_dataset, SyntheticSpec};
use comet::episodes::EpisodeSpec;
use comet::interpret::{class_global_importance, ScoreTransform};
use comet::model::{evaluate, protonet, train, CometModel, ModelConfig, Split, TrainConfig};
use comet::rng::stream;

fn main() -> comet::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let env = |k: &str| std::env::var(k).ok();
    let mut synth = SyntheticSpec { seed, ..Default::default() };
    if let Some(v) = env("SIGNAL") { synth.signal_strength = v.parse().unwrap(); }
    let (ds, concepts, truth) = make_synthetic(&synth)?;
    let splits = split_dataset(&ds, &synth.default_split(&ds.class_names))?;
    let spec = EpisodeSpec::default();
    let cfg = TrainConfig { seed, ..Default::default() };
    let mut model_cfg = ModelConfig::default();
    if let Some(v) = env("DROPOUT") { model_cfg.dropout = v.parse().unwrap(); }
    if env("SHARED").is_some() { model_cfg.weight_mode = comet::model::WeightMode::SharedAcrossConcepts; }
    if let Some(v) = env("DIM") { model_cfg.hidden = v.parse().unwrap(); model_cfg.embed_dim = v.parse().unwrap(); }

    let t = std::time::Instant::now();
    let comet = CometModel::new(concepts.with_whole_input(), &model_cfg, &mut stream(seed, "init", 0))?;
    let comet = train(comet, &splits.train, Some(Split::new(&splits.val)), spec, &cfg)?;
    println!("comet trained in {:?}, best val {:?} at {}", t.elapsed(), comet.best_val_acc, comet.best_episode);
    let pn = protonet(ds.dim(), &model_cfg, &mut stream(seed, "init", 0))?;
    let pn = train(pn, &splits.train, Some(Split::new(&splits.val)), spec, &cfg)?;

    let rc = evaluate(&comet.model, &splits.test, spec, 600, seed)?;
    let rp = evaluate(&pn.model, &splits.test, spec, 600, seed)?;
    println!("comet test {:.4} ± {:.4}", rc.mean_accuracy, rc.ci95_halfwidth);
    println!("protonet test {:.4} ± {:.4}", rp.mean_accuracy, rp.ci95_halfwidth);

    let gis = class_global_importance(&comet.model, &splits.test, spec, 600, seed, ScoreTransform::Negation)?;
    for (k, gi) in gis.iter().enumerate() {
        let gi = gi.as_ref().expect("class drawn");
        let global_id = ds.class_id(&splits.test.class_names[k]).unwrap();
        println!(
            "{} planted {:?} ranking {:?} dists {:?}",
            splits.test.class_names[k],
            truth.class_blocks[global_id],
            gi.ranking,
            gi.mean_distances.iter().map(|d| format!("{d:.2}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}
