use comet::concepts::apply_mask;
use comet::data::{make_synthetic, SyntheticSpec};
use comet::interpret::{
    class_global_importance, global_importance, global_importance_with, local_importance, rank_examples_by_concept,
    ScoreTransform,
};
use comet::model::{compute_prototypes, eval_rng, CometModel, ModelConfig, PrototypeBank};
use comet::nn::{mlp_forward, ForwardMode, Matrix};
use comet::rng::stream;
use proptest::prelude::*;

fn setup(spec: &SyntheticSpec, seed: u64) -> (comet::data::Dataset, CometModel) {
    let (ds, concepts, _) = make_synthetic(spec).unwrap();
    let m = CometModel::new(concepts.with_whole_input(), &ModelConfig::default(), &mut stream(seed, "init", 0)).unwrap();
    (ds, m)
}

fn class_rows(ds: &comet::data::Dataset, k: usize) -> Vec<usize> {
    (0..ds.len()).filter(|&r| ds.y[r] == k).collect()
}

fn bank(m: &CometModel, ds: &comet::data::Dataset, support: Vec<Vec<usize>>) -> PrototypeBank {
    let classes: Vec<usize> = support.iter().map(|rows| ds.y[rows[0]]).collect();
    compute_prototypes(m, ds, &classes, &support, ForwardMode::Eval, &mut eval_rng()).unwrap()
}

/// Distance of `x` to prototype `p` under concept `j`, computed one row at a time.
fn loop_distance(m: &CometModel, j: usize, x: &[f64], p: &[f64]) -> f64 {
    let xm = apply_mask(x, &m.concepts.masks()[j]).unwrap();
    let xm = Matrix::from_vec(1, xm.len(), xm).unwrap();
    let (e, _) = mlp_forward(m.net_for(j), &xm, ForwardMode::Eval, &mut eval_rng()).unwrap();
    e.row(0).iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum()
}

#[test]
fn one_shot_support_point_has_zero_distance_everywhere() {
    let (ds, m) = setup(&SyntheticSpec::default(), 1);
    let (a, b) = (class_rows(&ds, 0), class_rows(&ds, 1));
    let bk = bank(&m, &ds, vec![vec![a[0]], vec![b[0]]]);
    let li = local_importance(&m, &bk, ds.x.row(a[0]), 0).unwrap();
    assert!(li.distances.iter().all(|&d| d == 0.0));
    assert!(li.scores.iter().all(|&s| s == 0.0));
    assert_eq!(li.ranking, (0..m.n_concepts()).collect::<Vec<_>>());
}

#[test]
fn global_over_one_query_equals_local() {
    let (ds, m) = setup(&SyntheticSpec::default(), 2);
    let (a, b) = (class_rows(&ds, 2), class_rows(&ds, 3));
    let bk = bank(&m, &ds, vec![a[..5].to_vec(), b[..5].to_vec()]);
    let q = a[10];
    let li = local_importance(&m, &bk, ds.x.row(q), 2).unwrap();
    let gi = global_importance(&m, &bk, &ds.x.select_rows(&[q]), 2).unwrap();
    assert_eq!(gi.mean_distances, li.distances);
    assert_eq!(gi.scores, li.scores);
    assert_eq!(gi.ranking, li.ranking);
}

#[test]
fn global_matches_loop_oracle_and_ignores_duplication() {
    let (ds, m) = setup(&SyntheticSpec::default(), 3);
    let (a, b) = (class_rows(&ds, 4), class_rows(&ds, 5));
    let bk = bank(&m, &ds, vec![a[..5].to_vec(), b[..5].to_vec()]);
    let queries = &a[5..21];
    let gi = global_importance(&m, &bk, &ds.x.select_rows(queries), 4).unwrap();
    for j in 0..m.n_concepts() {
        let mean = queries.iter().map(|&r| loop_distance(&m, j, ds.x.row(r), &bk.protos[0][j])).sum::<f64>()
            / queries.len() as f64;
        assert!((gi.mean_distances[j] - mean).abs() <= 1e-8 * mean.max(1.0), "concept {j}");
    }
    let doubled: Vec<usize> = queries.iter().chain(queries).copied().collect();
    let gd = global_importance(&m, &bk, &ds.x.select_rows(&doubled), 4).unwrap();
    for (x, y) in gd.mean_distances.iter().zip(&gi.mean_distances) {
        assert!((x - y).abs() <= 1e-12 * y.max(1.0));
    }
    assert_eq!(gd.ranking, gi.ranking);
    let gr = global_importance_with(&m, &bk, &ds.x.select_rows(queries), 4, ScoreTransform::Reciprocal).unwrap();
    assert_eq!(gr.ranking, gi.ranking);
}

/// Classes A and B whose means differ in exactly one block `j`: only that
/// block's concept tells the two prototypes apart, so its score gap is the
/// largest and every other block's gap is zero.
#[test]
fn zero_noise_gap_is_largest_on_the_separating_block() {
    let spec = SyntheticSpec { noise_sd: 0.0, per_class: 4, ..Default::default() };
    let (ds, concepts, truth) = make_synthetic(&spec).unwrap();
    let m = CometModel::new(concepts, &ModelConfig::default(), &mut stream(4, "init", 0)).unwrap();
    let mut checked = 0;
    for a in 0..ds.n_classes() {
        for b in 0..ds.n_classes() {
            let sep = truth.separating_blocks(a, b);
            if a == b || sep.len() != 1 {
                continue;
            }
            let j = sep[0];
            let bk = bank(&m, &ds, vec![class_rows(&ds, a)[..2].to_vec(), class_rows(&ds, b)[..2].to_vec()]);
            let x = ds.x.row(class_rows(&ds, a)[3]);
            let la = local_importance(&m, &bk, x, a).unwrap();
            let lb = local_importance(&m, &bk, x, b).unwrap();
            let gaps: Vec<f64> = la.scores.iter().zip(&lb.scores).map(|(sa, sb)| sa - sb).collect();
            assert!(gaps[j] > 0.0, "classes {a},{b}");
            for (i, &g) in gaps.iter().enumerate() {
                if i != j {
                    assert_eq!(g, 0.0, "classes {a},{b} block {i}");
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 0);
}

/// With zero noise every query equals its class prototype input, so all
/// concept distances vanish up to rounding and the ranking carries no signal.
#[test]
fn zero_noise_global_distances_vanish() {
    let spec = SyntheticSpec { noise_sd: 0.0, ..Default::default() };
    let (ds, m) = setup(&spec, 5);
    let gis = class_global_importance(&m, &ds, Default::default(), 20, 6, ScoreTransform::Negation).unwrap();
    for gi in gis.into_iter().flatten() {
        assert!(gi.mean_distances.iter().all(|&d| d <= 1e-20), "{:?}", gi.mean_distances);
    }
}

#[test]
fn exact_match_ranks_first() {
    let (ds, m) = setup(&SyntheticSpec::default(), 7);
    let rows = class_rows(&ds, 6);
    let bk = bank(&m, &ds, vec![vec![rows[7]], vec![class_rows(&ds, 7)[0]]]);
    for j in 0..m.n_concepts() {
        let ranked = rank_examples_by_concept(&m, &bk.protos[0][j], &ds.x.select_rows(&rows), j).unwrap();
        assert_eq!(ranked[0].index, 7);
        assert_eq!(ranked[0].distance, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ranking_is_a_sorted_permutation(rows in prop::collection::vec(0usize..1200, 1..30), concept in 0usize..5, proto_row in 0usize..1200) {
        let (ds, m) = shared();
        let proto = m.embed_concept(concept, &ds.x.select_rows(&[proto_row])).unwrap().row(0).to_vec();
        let ranked = rank_examples_by_concept(m, &proto, &ds.x.select_rows(&rows), concept).unwrap();
        let mut seen: Vec<usize> = ranked.iter().map(|r| r.index).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..rows.len()).collect::<Vec<_>>());
        for w in ranked.windows(2) {
            prop_assert!(w[0].distance < w[1].distance || (w[0].distance == w[1].distance && w[0].index < w[1].index));
        }
        for r in &ranked {
            let d = loop_distance(m, concept, ds.x.row(rows[r.index]), &proto);
            prop_assert!((r.distance - d).abs() <= 1e-8 * d.max(1.0));
        }
    }
}

fn shared() -> &'static (comet::data::Dataset, CometModel) {
    static CELL: std::sync::OnceLock<(comet::data::Dataset, CometModel)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| setup(&SyntheticSpec::default(), 8))
}

#[test]
fn unknown_class_and_empty_inputs_are_rejected() {
    let (ds, m) = setup(&SyntheticSpec::default(), 9);
    let bk = bank(&m, &ds, vec![class_rows(&ds, 0)[..2].to_vec(), class_rows(&ds, 1)[..2].to_vec()]);
    assert!(local_importance(&m, &bk, ds.x.row(0), 5).is_err());
    assert!(global_importance(&m, &bk, &Matrix::zeros(0, ds.dim()), 0).is_err());
    assert!(rank_examples_by_concept(&m, &bk.protos[0][0], &Matrix::zeros(0, ds.dim()), 0).is_err());
}
