//! Tabular datasets, class-disjoint splits, and the planted-block synthetic
//! generator.
//!
//! On disk a dataset is two aligned files: `features.csv` with a header row
//! (`f_0,...,f_{D-1}`) and `labels.csv` holding one class name per line.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptSet, GroundTruthConcepts};
use crate::error::{check_dim, CometError, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// Dense class ids indexing `class_names`.
    pub y: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, class_names: Vec<String>, feature_names: Vec<String>) -> Result<Self> {
        check_dim("labels", x.rows(), y.len())?;
        check_dim("feature names", x.cols(), feature_names.len())?;
        if x.cols() == 0 {
            return Err(CometError::validation("dataset", "needs at least one feature"));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= class_names.len()) {
            return Err(CometError::Index { context: "class id", index: bad, len: class_names.len() });
        }
        let ds = Dataset { x, y, class_names, feature_names };
        if let Some(empty) = ds.class_rows().iter().position(Vec::is_empty) {
            return Err(CometError::validation(
                "dataset",
                format!("class '{}' has no examples", ds.class_names[empty]),
            ));
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Row indices grouped by class id.
    pub fn class_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.class_names.len()];
        for (i, &c) in self.y.iter().enumerate() {
            rows[c].push(i);
        }
        rows
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn write(&self, features_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
        let fp = features_path.as_ref();
        let mut w = csv::Writer::from_path(fp).map_err(|e| csv_io(fp, e))?;
        w.write_record(&self.feature_names).map_err(|e| csv_io(fp, e))?;
        for row in self.x.iter_rows() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| csv_io(fp, e))?;
        }
        w.flush().map_err(|e| CometError::io(fp, e))?;

        let lp = labels_path.as_ref();
        let mut labels = String::with_capacity(self.y.len() * 8);
        for &c in &self.y {
            labels.push_str(&self.class_names[c]);
            labels.push('\n');
        }
        std::fs::write(lp, labels).map_err(|e| CometError::io(lp, e))
    }

    /// Loads the two-file layout. Class ids follow first appearance in the
    /// labels file.
    pub fn load(features_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Self> {
        let fp = features_path.as_ref();
        let source = fp.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(fp)
            .map_err(|e| csv_io(fp, e))?;
        let feature_names: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_parse(&source, 1, e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let d = feature_names.len();
        if d == 0 || feature_names.iter().all(String::is_empty) {
            return Err(csv_parse(&source, 1, "empty header".into()));
        }
        let mut data = Vec::new();
        let mut n = 0;
        for (r, rec) in rdr.records().enumerate() {
            let line = r + 2;
            let rec = rec.map_err(|e| csv_parse(&source, line, e.to_string()))?;
            if rec.len() != d {
                return Err(csv_parse(&source, line, format!("expected {d} fields, found {}", rec.len())));
            }
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| csv_parse(&source, line, format!("column {j}: '{cell}' is not a number")))?;
                if !v.is_finite() {
                    return Err(csv_parse(&source, line, format!("column {j}: non-finite value '{cell}'")));
                }
                data.push(v);
            }
            n += 1;
        }

        let lp = labels_path.as_ref();
        let lsource = lp.display().to_string();
        let text = std::fs::read_to_string(lp).map_err(|e| CometError::io(lp, e))?;
        let mut class_names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut y = Vec::with_capacity(n);
        for (i, raw) in text.lines().enumerate() {
            let name = raw.trim();
            if name.is_empty() {
                if i >= n {
                    continue;
                }
                return Err(csv_parse(&lsource, i + 1, "empty class label".into()));
            }
            let id = *index.entry(name.to_string()).or_insert_with(|| {
                class_names.push(name.to_string());
                class_names.len() - 1
            });
            y.push(id);
        }
        if y.len() != n {
            return Err(csv_parse(
                &lsource,
                y.len().min(n) + 1,
                format!("{} labels for {n} feature rows", y.len()),
            ));
        }
        Dataset::new(Matrix::from_vec(n, d, data)?, y, class_names, feature_names)
    }

    /// Rows of the named classes, with class ids renumbered in `classes` order.
    pub fn restrict_to(&self, classes: &[String]) -> Result<Dataset> {
        let mut remap = vec![None; self.class_names.len()];
        for (new, name) in classes.iter().enumerate() {
            let old = self.class_id(name).ok_or_else(|| {
                CometError::validation("split", format!("unknown class '{name}'"))
            })?;
            remap[old] = Some(new);
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| remap[self.y[i]].is_some()).collect();
        let y = rows.iter().map(|&i| remap[self.y[i]].expect("filtered")).collect();
        Dataset::new(
            self.x.select_rows(&rows),
            y,
            classes.to_vec(),
            self.feature_names.clone(),
        )
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CometError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CometError::io(path, io),
        other => CometError::Parse { path: path.display().to_string(), line: 0, reason: format!("{other:?}") },
    }
}

fn csv_parse(source: &str, line: usize, reason: String) -> CometError {
    CometError::Parse { path: source.to_string(), line, reason }
}

/// Class names assigned to each split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (label, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if set.is_empty() {
                return Err(CometError::validation("split", format!("{label} has no classes")));
            }
            for c in set {
                if !seen.insert(c.as_str()) {
                    return Err(CometError::validation("split", format!("class '{c}' appears in more than one split or twice")));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CometError::io(path, e))?;
        let spec: SplitSpec = serde_json::from_str(&text).map_err(|e| CometError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("split spec serializes");
        std::fs::write(path, text + "\n").map_err(|e| CometError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    Ok(Splits {
        train: ds.restrict_to(&spec.train)?,
        val: ds.restrict_to(&spec.val)?,
        test: ds.restrict_to(&spec.test)?,
    })
}

/// Per-feature z-scoring fitted on one dataset (the train split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let mean: Vec<f64> = ds.x.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; ds.dim()];
        for row in ds.x.iter_rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        // constant columns are centred only
        let sd = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        Standardizer { mean, sd }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        check_dim("standardizer width", self.mean.len(), ds.dim())?;
        let mut out = ds.clone();
        for i in 0..out.x.rows() {
            for (j, v) in out.x.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.sd[j];
            }
        }
        Ok(out)
    }
}

/// Parameters of the planted-block generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub n_blocks: usize,
    pub block_size: usize,
    pub n_noise_features: usize,
    /// Euclidean norm of a class mean restricted to one of its designated blocks.
    pub signal_strength: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 20,
            per_class: 60,
            n_blocks: 4,
            block_size: 8,
            n_noise_features: 32,
            signal_strength: 5.0,
            noise_sd: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn dim(&self) -> usize {
        self.n_blocks * self.block_size + self.n_noise_features
    }

    /// Number of distinct class means available: one or two signed blocks.
    pub fn max_classes(&self) -> usize {
        let b = self.n_blocks;
        2 * b + 4 * (b * b.saturating_sub(1) / 2)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |r: String| Err(CometError::validation("synthetic spec", r));
        if self.n_blocks == 0 || self.block_size == 0 {
            return fail("n_blocks and block_size must be >= 1".into());
        }
        if self.n_classes < 2 || self.n_classes > self.max_classes() {
            return fail(format!("n_classes {} must be in 2..={}", self.n_classes, self.max_classes()));
        }
        if self.per_class == 0 {
            return fail("per_class must be >= 1".into());
        }
        if !(self.signal_strength > 0.0 && self.signal_strength.is_finite()) {
            return fail("signal_strength must be > 0".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail("noise_sd must be >= 0".into());
        }
        Ok(())
    }

    /// Class split used by the generated splits file: half train, a quarter
    /// each for validation and test.
    pub fn default_split(&self, class_names: &[String]) -> SplitSpec {
        let n = class_names.len();
        let n_test = (n / 4).max(1);
        let n_val = (n / 4).max(1);
        let n_train = n - n_test - n_val;
        SplitSpec {
            train: class_names[..n_train].to_vec(),
            val: class_names[n_train..n_train + n_val].to_vec(),
            test: class_names[n_train + n_val..].to_vec(),
        }
    }
}

/// Which blocks carry each class's signal, and which blocks separate pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `class_blocks[k]` = designated blocks of class `k`.
    pub class_blocks: Vec<Vec<usize>>,
    /// `class_signs[k][b]` ∈ {−1, 0, +1}: sign of class `k`'s mean in block `b`.
    pub class_signs: Vec<Vec<i8>>,
}

impl GroundTruth {
    /// Blocks in which the means of classes `a` and `b` differ.
    pub fn separating_blocks(&self, a: usize, b: usize) -> Vec<usize> {
        (0..self.class_signs[a].len())
            .filter(|&j| self.class_signs[a][j] != self.class_signs[b][j])
            .collect()
    }

    pub fn to_concepts_file(&self, class_names: &[String], concepts: &ConceptSet) -> GroundTruthConcepts {
        GroundTruthConcepts {
            entries: class_names
                .iter()
                .zip(&self.class_blocks)
                .map(|(c, blocks)| {
                    (c.clone(), blocks.iter().map(|&b| concepts.masks()[b].name.clone()).collect())
                })
                .collect(),
        }
    }
}

pub fn block_name(b: usize) -> String {
    format!("block_{b}")
}

/// Generates the planted-block dataset. Features are laid out as
/// `n_blocks` contiguous blocks followed by the noise columns. Each class
/// mean is `±signal/√block_size` on every feature of one or two designated
/// blocks and zero elsewhere; samples add isotropic Gaussian noise.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, ConceptSet, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nb = spec.n_blocks;

    let mut patterns: Vec<Vec<i8>> = Vec::new();
    for b in 0..nb {
        for s in [1i8, -1] {
            let mut p = vec![0i8; nb];
            p[b] = s;
            patterns.push(p);
        }
    }
    for b1 in 0..nb {
        for b2 in b1 + 1..nb {
            for (s1, s2) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
                let mut p = vec![0i8; nb];
                p[b1] = s1;
                p[b2] = s2;
                patterns.push(p);
            }
        }
    }
    patterns.shuffle(&mut rng);
    patterns.truncate(spec.n_classes);

    let d = spec.dim();
    let amp = spec.signal_strength / (spec.block_size as f64).sqrt();
    let means: Vec<Vec<f64>> = patterns
        .iter()
        .map(|p| {
            let mut m = vec![0.0; d];
            for (b, &s) in p.iter().enumerate() {
                for f in b * spec.block_size..(b + 1) * spec.block_size {
                    m[f] = f64::from(s) * amp;
                }
            }
            m
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| CometError::validation("noise_sd", e.to_string()))?;
    let n = spec.n_classes * spec.per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            data.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
            y.push(k);
        }
    }
    let class_names: Vec<String> = (0..spec.n_classes).map(|k| format!("class_{k:02}")).collect();
    let feature_names = (0..d).map(|j| format!("f_{j}")).collect();
    let ds = Dataset::new(Matrix::from_vec(n, d, data)?, y, class_names, feature_names)?;

    let concepts = ConceptSet::from_indices(
        d,
        (0..nb)
            .map(|b| (block_name(b), (b * spec.block_size..(b + 1) * spec.block_size).collect()))
            .collect(),
    )?;
    let truth = GroundTruth {
        class_blocks: patterns
            .iter()
            .map(|p| (0..nb).filter(|&b| p[b] != 0).collect())
            .collect(),
        class_signs: patterns,
    };
    Ok((ds, concepts, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]).unwrap();
        Dataset::new(
            x,
            vec![0, 1, 2, 0],
            vec!["A".into(), "B".into(), "C".into()],
            vec!["f_0".into(), "f_1".into()],
        )
        .unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn partition_into_single_classes() {
        let ds = tiny();
        let spec = SplitSpec { train: names(&["A"]), val: names(&["B"]), test: names(&["C"]) };
        let s = split_dataset(&ds, &spec).unwrap();
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.train.x.row(1), &[7.0, 8.0]);
        assert_eq!(s.val.x.row(0), &[3.0, 4.0]);
        assert_eq!(s.test.class_names, names(&["C"]));
        assert!(s.test.y.iter().all(|&c| c == 0));
    }

    #[test]
    fn overlapping_split_rejected() {
        let ds = tiny();
        let spec = SplitSpec { train: names(&["A", "B"]), val: names(&["B"]), test: names(&["C"]) };
        assert!(split_dataset(&ds, &spec).is_err());
        let unknown = SplitSpec { train: names(&["A"]), val: names(&["B"]), test: names(&["Z"]) };
        assert!(split_dataset(&ds, &unknown).is_err());
    }

    #[test]
    fn zero_noise_limit() {
        let spec = SyntheticSpec { noise_sd: 0.0, n_classes: 6, per_class: 5, ..Default::default() };
        let (ds, cs, truth) = make_synthetic(&spec).unwrap();
        assert_eq!(cs.len(), spec.n_blocks);
        let rows = ds.class_rows();
        for (k, r) in rows.iter().enumerate() {
            for &i in r {
                assert_eq!(ds.x.row(i), ds.x.row(r[0]), "class {k} rows differ");
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let sep = truth.separating_blocks(a, b);
                for blk in 0..spec.n_blocks {
                    let cols = blk * spec.block_size..(blk + 1) * spec.block_size;
                    let same = cols.clone().all(|j| ds.x[(rows[a][0], j)] == ds.x[(rows[b][0], j)]);
                    assert_eq!(same, !sep.contains(&blk));
                }
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::default();
        let a = make_synthetic(&spec).unwrap();
        let b = make_synthetic(&spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        assert_eq!(a.0.dim(), 64);
        let other = make_synthetic(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn invalid_synthetic_spec() {
        assert!(make_synthetic(&SyntheticSpec { n_classes: 33, ..Default::default() }).is_err());
        assert!(make_synthetic(&SyntheticSpec { signal_strength: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn standardizer_fits_train_only() {
        let ds = tiny();
        let z = Standardizer::fit(&ds);
        let out = z.apply(&ds).unwrap();
        for j in 0..2 {
            let m: f64 = (0..4).map(|i| out.x[(i, j)]).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
        }
    }
}
