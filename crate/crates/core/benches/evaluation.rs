use comet::data::{make_synthetic, split_dataset, SyntheticSpec};
use comet::episodes::EpisodeSpec;
use comet::exec::Execution;
use comet::model::{evaluate_with, CometModel, ModelConfig};
use comet::rng::stream;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn evaluation(c: &mut Criterion) {
    let spec = SyntheticSpec::default();
    let (ds, concepts, _) = make_synthetic(&spec).unwrap();
    let splits = split_dataset(&ds, &spec.default_split(&ds.class_names)).unwrap();
    let model =
        CometModel::new(concepts.with_whole_input(), &ModelConfig::default(), &mut stream(0, "init", 0)).unwrap();
    let episodes = 100;

    let mut group = c.benchmark_group("evaluate_100_episodes");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| evaluate_with(&model, &splits.test, EpisodeSpec::default(), episodes, 1, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, evaluation);
criterion_main!(benches);
