use std::collections::BTreeSet;

use comet::data::Dataset;
use comet::episodes::{EpisodeSampler, EpisodeSpec};
use comet::nn::Matrix;
use comet::rng::stream;
use proptest::prelude::*;

fn balanced(n_classes: usize, per_class: usize) -> Dataset {
    let n = n_classes * per_class;
    Dataset::new(
        Matrix::from_vec(n, 2, (0..2 * n).map(|v| v as f64).collect()).unwrap(),
        (0..n).map(|i| i / per_class).collect(),
        (0..n_classes).map(|k| format!("c{k}")).collect(),
        vec!["a".into(), "b".into()],
    )
    .unwrap()
}

#[test]
fn classes_appear_with_binomial_frequency() {
    let ds = balanced(10, 30);
    let spec = EpisodeSpec { way: 5, shot: 1, query_per_class: 2 };
    let sampler = EpisodeSampler::new(&ds, spec).unwrap();
    let n = 10_000;
    let mut counts = [0usize; 10];
    for i in 0..n {
        for c in sampler.sample(&mut stream(11, "train-episode", i)).classes {
            counts[c] += 1;
        }
    }
    let p = 0.5;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for (c, &k) in counts.iter().enumerate() {
        let z = (k as f64 - n as f64 * p) / sd;
        assert!(z.abs() < 3.0, "class {c}: {k} appearances, z = {z}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn episodes_are_well_formed(
        n_classes in 2usize..8,
        per_class in 2usize..12,
        way in 2usize..8,
        shot in 1usize..5,
        query in 1usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(way <= n_classes && shot + query <= per_class);
        let ds = balanced(n_classes, per_class);
        let spec = EpisodeSpec { way, shot, query_per_class: query };
        let ep = EpisodeSampler::new(&ds, spec).unwrap().sample(&mut stream(seed, "train-episode", 0));

        prop_assert_eq!(ep.way(), way);
        prop_assert_eq!(ep.classes.iter().collect::<BTreeSet<_>>().len(), way);
        let support: BTreeSet<usize> = ep.support_rows().collect();
        let query_rows: BTreeSet<usize> = ep.query_rows().collect();
        prop_assert_eq!(support.len(), way * shot);
        prop_assert_eq!(query_rows.len(), way * query);
        prop_assert!(support.is_disjoint(&query_rows));
        for (pos, rows) in ep.support.iter().enumerate() {
            prop_assert!(rows.iter().all(|&r| ds.y[r] == ep.classes[pos]));
        }
        for &(r, pos) in &ep.query {
            prop_assert_eq!(ds.y[r], ep.classes[pos]);
        }
    }
}
