use std::collections::BTreeMap;

use comet::data::{make_synthetic, split_dataset, Dataset, SplitSpec, SyntheticSpec};
use comet::nn::Matrix;
use comet::CometError;
use proptest::prelude::*;

fn write_pair(dir: &std::path::Path, features: &str, labels: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let f = dir.join("features.csv");
    let l = dir.join("labels.csv");
    std::fs::write(&f, features).unwrap();
    std::fs::write(&l, labels).unwrap();
    (f, l)
}

#[test]
fn minimal_two_row_file() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l) = write_pair(dir.path(), "a,b,c\n1,2,3\n4,5,6\n", "A\nB\n");
    let ds = Dataset::load(&f, &l).unwrap();
    assert_eq!(ds.x.shape(), (2, 3));
    assert_eq!(ds.x.row(1), &[4.0, 5.0, 6.0]);
    assert_eq!(ds.y, vec![0, 1]);
    assert_eq!(ds.class_names, vec!["A", "B"]);
    assert_eq!(ds.feature_names, vec!["a", "b", "c"]);
}

#[test]
fn nan_cell_is_rejected_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l) = write_pair(dir.path(), "a,b\n1,2\n3,NaN\n", "A\nB\n");
    match Dataset::load(&f, &l) {
        Err(CometError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn label_count_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l) = write_pair(dir.path(), "a\n1\n2\n", "A\n");
    assert!(matches!(Dataset::load(&f, &l), Err(CometError::Parse { .. })));
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..5, 2usize..5, 1usize..4).prop_flat_map(|(dim, n_classes, per_class)| {
        let n = n_classes * per_class;
        (
            prop::collection::vec(-1e6f64..1e6, n * dim),
            Just(dim),
            Just(n_classes),
            Just(per_class),
        )
            .prop_map(|(values, dim, n_classes, per_class)| {
                let n = n_classes * per_class;
                Dataset::new(
                    Matrix::from_vec(n, dim, values).unwrap(),
                    (0..n).map(|i| i % n_classes).collect(),
                    (0..n_classes).map(|k| format!("class_{k}")).collect(),
                    (0..dim).map(|j| format!("f_{j}")).collect(),
                )
                .unwrap()
            })
    })
}

fn multiset(ds: &Dataset) -> BTreeMap<(String, Vec<u64>), usize> {
    let mut m = BTreeMap::new();
    for (r, &y) in ds.y.iter().enumerate() {
        let bits = ds.x.row(r).iter().map(|v| v.to_bits()).collect();
        *m.entry((ds.class_names[y].clone(), bits)).or_insert(0) += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_then_load_is_exact(ds in dataset_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("f.csv");
        let l = dir.path().join("l.csv");
        ds.write(&f, &l).unwrap();
        prop_assert_eq!(Dataset::load(&f, &l).unwrap(), ds);
    }

    #[test]
    fn splits_conserve_rows(ds in dataset_strategy(), assignment in prop::collection::vec(0usize..3, 4)) {
        let n_classes = ds.n_classes();
        prop_assume!(n_classes >= 3);
        let mut parts: [Vec<String>; 3] = Default::default();
        for k in 0..n_classes {
            let part = if k < 3 { k } else { assignment[k % assignment.len()] };
            parts[part].push(ds.class_names[k].clone());
        }
        let [train, val, test] = parts;
        let splits = split_dataset(&ds, &SplitSpec { train, val, test }).unwrap();
        prop_assert_eq!(splits.train.len() + splits.val.len() + splits.test.len(), ds.len());
        let mut union = multiset(&splits.train);
        for part in [&splits.val, &splits.test] {
            for (key, c) in multiset(part) {
                *union.entry(key).or_insert(0) += c;
            }
        }
        prop_assert_eq!(union, multiset(&ds));
    }
}

/// One decision per sample: nearest class mean on the features of the
/// sample's first designated block. Class means restricted to a block are
/// `sign · amp` with sign in {−1, 0, +1}.
#[test]
fn designated_block_separates_classes() {
    let spec = SyntheticSpec { per_class: 50, ..Default::default() };
    assert_eq!(spec.n_classes * spec.per_class, 1000);
    let (ds, concepts, truth) = make_synthetic(&spec).unwrap();
    let amp = spec.signal_strength / (spec.block_size as f64).sqrt();

    let mut correct = 0;
    for (r, &y) in ds.y.iter().enumerate() {
        let b = truth.class_blocks[y][0];
        let features = concepts.masks()[b].indices();
        let sq = |k: usize| {
            let m = f64::from(truth.class_signs[k][b]) * amp;
            features.iter().map(|&f| (ds.x.row(r)[f] - m).powi(2)).sum::<f64>()
        };
        let best = (0..ds.n_classes()).min_by(|&a, &c| sq(a).total_cmp(&sq(c))).unwrap();
        correct += usize::from(truth.class_signs[best][b] == truth.class_signs[y][b]);
    }
    let acc = correct as f64 / ds.len() as f64;
    assert!(acc > 0.99, "accuracy {acc}");
}

#[test]
fn noise_columns_carry_no_class_signal() {
    let spec = SyntheticSpec { n_classes: 2, per_class: 1000, ..Default::default() };
    let (ds, _, _) = make_synthetic(&spec).unwrap();
    let signal = spec.n_blocks * spec.block_size;
    for f in signal..ds.dim() {
        let column = |k: usize| -> Vec<f64> {
            (0..ds.len()).filter(|&r| ds.y[r] == k).map(|r| ds.x.row(r)[f]).collect()
        };
        let (a, b) = (column(0), column(1));
        let stats = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0), n)
        };
        let ((ma, va, na), (mb, vb, nb)) = (stats(&a), stats(&b));
        let t = (ma - mb) / (va / na + vb / nb).sqrt();
        assert!(t.abs() < 5.0, "feature {f}: t = {t}");
    }
}

#[test]
fn zero_noise_rows_equal_their_class_mean() {
    let spec = SyntheticSpec { noise_sd: 0.0, per_class: 3, ..Default::default() };
    let (ds, _, truth) = make_synthetic(&spec).unwrap();
    let amp = spec.signal_strength / (spec.block_size as f64).sqrt();
    for (r, &y) in ds.y.iter().enumerate() {
        for (f, &v) in ds.x.row(r).iter().enumerate() {
            let b = f / spec.block_size;
            let expected = if b < spec.n_blocks { f64::from(truth.class_signs[y][b]) * amp } else { 0.0 };
            assert_eq!(v, expected);
        }
    }
}
