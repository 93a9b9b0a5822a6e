//! Concept masks: named subsets of input features.
//!
//! Concepts may overlap, be redundant, or leave features uncovered.
//!
//! Text format, one concept per line (indices are 0-based feature columns):
//!
//! ```text
//! block_0: 0 1 2 3
//! block_1: 4 5 6 7
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, CometError, Result};
use crate::nn::Matrix;
use crate::rng::RngStream;

pub const WHOLE_INPUT_NAME: &str = "whole_input";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptMask {
    pub id: usize,
    pub name: String,
    bits: Vec<bool>,
}

impl ConceptMask {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect()
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptSet {
    masks: Vec<ConceptMask>,
    dim: usize,
}

impl ConceptSet {
    /// Builds a set from `(name, bits)` pairs; ids are assigned by position.
    pub fn new(dim: usize, masks: Vec<(String, Vec<bool>)>) -> Result<Self> {
        if dim == 0 {
            return Err(CometError::validation("concept set", "feature dimension must be >= 1"));
        }
        if masks.is_empty() {
            return Err(CometError::validation("concept set", "needs at least one concept"));
        }
        let mut names = HashSet::new();
        let mut out = Vec::with_capacity(masks.len());
        for (id, (name, bits)) in masks.into_iter().enumerate() {
            check_dim("concept mask length", dim, bits.len())?;
            if !bits.iter().any(|b| *b) {
                return Err(CometError::validation("concept mask", format!("'{name}' selects no features")));
            }
            if name.is_empty() || name.contains(':') || name.contains(char::is_whitespace) {
                return Err(CometError::validation("concept name", format!("'{name}' must be non-empty without ':' or spaces")));
            }
            if !names.insert(name.clone()) {
                return Err(CometError::validation("concept set", format!("duplicate concept name '{name}'")));
            }
            out.push(ConceptMask { id, name, bits });
        }
        Ok(ConceptSet { masks: out, dim })
    }

    pub fn from_indices(dim: usize, masks: Vec<(String, Vec<usize>)>) -> Result<Self> {
        let mut bit_masks = Vec::with_capacity(masks.len());
        for (name, idx) in masks {
            let mut bits = vec![false; dim];
            for i in idx {
                if i >= dim {
                    return Err(CometError::Index { context: "concept feature index", index: i, len: dim });
                }
                if bits[i] {
                    return Err(CometError::validation("concept mask", format!("'{name}' repeats index {i}")));
                }
                bits[i] = true;
            }
            bit_masks.push((name, bits));
        }
        ConceptSet::new(dim, bit_masks)
    }

    /// The set holding only the all-ones mask.
    pub fn whole_input(dim: usize) -> Result<Self> {
        ConceptSet::new(dim, vec![(WHOLE_INPUT_NAME.to_string(), vec![true; dim])])
    }

    pub fn masks(&self) -> &[ConceptMask] {
        &self.masks
    }

    pub fn get(&self, id: usize) -> Option<&ConceptMask> {
        self.masks.get(id)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.masks.iter().position(|m| m.name == name)
    }

    /// Id of the first all-ones mask, if any.
    pub fn whole_input_id(&self) -> Option<usize> {
        self.masks.iter().position(ConceptMask::is_all_ones)
    }

    /// Appends an all-ones mask unless one is already present. Idempotent.
    pub fn with_whole_input(&self) -> ConceptSet {
        if self.whole_input_id().is_some() {
            return self.clone();
        }
        let mut name = WHOLE_INPUT_NAME.to_string();
        while self.position(&name).is_some() {
            name.push('_');
        }
        let mut masks = self.masks.clone();
        masks.push(ConceptMask { id: masks.len(), name, bits: vec![true; self.dim] });
        ConceptSet { masks, dim: self.dim }
    }

    /// The first `count` concepts.
    pub fn prefix(&self, count: usize) -> Result<ConceptSet> {
        self.subset(&(0..count).collect::<Vec<_>>())
    }

    /// The concepts at `ids`, in the given order, renumbered by position.
    pub fn subset(&self, ids: &[usize]) -> Result<ConceptSet> {
        let mut masks = Vec::with_capacity(ids.len());
        for &id in ids {
            let m = self.masks.get(id).ok_or(CometError::Index {
                context: "concept id",
                index: id,
                len: self.masks.len(),
            })?;
            masks.push((m.name.clone(), m.bits.clone()));
        }
        ConceptSet::new(self.dim, masks)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in &self.masks {
            s.push_str(&m.name);
            s.push(':');
            for i in m.indices() {
                let _ = write!(s, " {i}");
            }
            s.push('\n');
        }
        s
    }

    /// Parses the line format; `dim` is the number of feature columns.
    pub fn parse(text: &str, dim: usize, source: &str) -> Result<ConceptSet> {
        let mut masks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| CometError::Parse {
                path: source.to_string(),
                line: lineno + 1,
                reason,
            };
            let (name, rest) = line
                .split_once(':')
                .ok_or_else(|| parse_err("expected 'name: idx idx ...'".into()))?;
            let mut seen = HashSet::new();
            let mut idx = Vec::new();
            for tok in rest.split_whitespace() {
                let i: usize = tok.parse().map_err(|_| parse_err(format!("bad feature index '{tok}'")))?;
                if i >= dim {
                    return Err(parse_err(format!("feature index {i} out of range for {dim} features")));
                }
                if !seen.insert(i) {
                    return Err(parse_err(format!("duplicate feature index {i}")));
                }
                idx.push(i);
            }
            if idx.is_empty() {
                return Err(parse_err(format!("concept '{}' lists no features", name.trim())));
            }
            masks.push((name.trim().to_string(), idx));
        }
        ConceptSet::from_indices(dim, masks).map_err(|e| match e {
            CometError::Validation { what, reason } => CometError::Validation {
                what,
                reason: format!("{reason} (in {source})"),
            },
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<ConceptSet> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CometError::io(path, e))?;
        ConceptSet::parse(&text, dim, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| CometError::io(path, e))
    }

    /// Hex SHA-256 over the dimension and the canonical text form.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("dim={}\n", self.dim).as_bytes());
        h.update(self.to_text().as_bytes());
        hex::encode(h.finalize())
    }
}

pub fn apply_mask(x: &[f64], mask: &ConceptMask) -> Result<Vec<f64>> {
    check_dim("masked input", mask.len(), x.len())?;
    Ok(x.iter()
        .zip(&mask.bits)
        .map(|(v, b)| if *b { *v } else { 0.0 })
        .collect())
}

/// Row-wise Hadamard product of `x` with `mask`.
pub fn apply_mask_rows(x: &Matrix, mask: &ConceptMask) -> Result<Matrix> {
    check_dim("masked input", mask.len(), x.cols())?;
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, b) in out.row_mut(i).iter_mut().zip(&mask.bits) {
            if !*b {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

/// `n_masks` random masks with exactly `bits_per_mask` features each.
pub fn random_masks(dim: usize, n_masks: usize, bits_per_mask: usize, rng: &mut RngStream) -> Result<ConceptSet> {
    if bits_per_mask == 0 || bits_per_mask > dim {
        return Err(CometError::validation(
            "random masks",
            format!("bits_per_mask {bits_per_mask} must be in 1..={dim}"),
        ));
    }
    let masks = (0..n_masks)
        .map(|i| {
            let mut idx = sample(rng, dim, bits_per_mask).into_vec();
            idx.sort_unstable();
            (format!("random_{i}"), idx)
        })
        .collect();
    ConceptSet::from_indices(dim, masks)
}

/// Keeps the `keep` highest-scoring masks in their original order. Ties go
/// to the lower id.
pub fn select_top_masks(cs: &ConceptSet, scores: &[f64], keep: usize) -> Result<ConceptSet> {
    check_dim("concept scores", cs.len(), scores.len())?;
    if keep == 0 || keep > cs.len() {
        return Err(CometError::validation("keep", format!("{keep} must be in 1..={}", cs.len())));
    }
    let mut order: Vec<usize> = (0..cs.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = order[..keep].to_vec();
    chosen.sort_unstable();
    cs.subset(&chosen)
}

/// Per-class ground-truth concept names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthConcepts {
    pub entries: Vec<(String, Vec<String>)>,
}

impl GroundTruthConcepts {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (class, rest) = line.split_once(':').ok_or_else(|| CometError::Parse {
                path: source.to_string(),
                line: lineno + 1,
                reason: "expected 'class_name: concept concept ...'".into(),
            })?;
            entries.push((
                class.trim().to_string(),
                rest.split_whitespace().map(str::to_string).collect(),
            ));
        }
        Ok(GroundTruthConcepts { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CometError::io(path, e))?;
        GroundTruthConcepts::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (class, concepts) in &self.entries {
            let _ = writeln!(s, "{class}: {}", concepts.join(" "));
        }
        s
    }

    pub fn get(&self, class: &str) -> Option<&[String]> {
        self.entries.iter().find(|(c, _)| c == class).map(|(_, v)| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn three() -> ConceptSet {
        ConceptSet::from_indices(
            4,
            vec![("a".into(), vec![0, 1]), ("b".into(), vec![2]), ("c".into(), vec![1, 2, 3])],
        )
        .unwrap()
    }

    #[test]
    fn mask_selects_positions() {
        let cs = ConceptSet::from_indices(3, vec![("m".into(), vec![2])]).unwrap();
        assert_eq!(apply_mask(&[5.0, 6.0, 7.0], &cs.masks()[0]).unwrap(), vec![0.0, 0.0, 7.0]);
        let all = ConceptSet::whole_input(3).unwrap();
        assert_eq!(apply_mask(&[5.0, 6.0, 7.0], &all.masks()[0]).unwrap(), vec![5.0, 6.0, 7.0]);
        assert!(apply_mask(&[1.0], &all.masks()[0]).is_err());
    }

    #[test]
    fn mask_matches_loop_oracle() {
        let mut rng = stream(3, "mask", 0);
        let cs = random_masks(10, 5, 4, &mut rng).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1.5 - 4.0).collect();
        for m in cs.masks() {
            let got = apply_mask(&x, m).unwrap();
            for i in 0..10 {
                let expect = if m.bits()[i] { x[i] } else { 0.0 };
                assert_eq!(got[i], expect);
            }
        }
    }

    #[test]
    fn whole_input_is_appended_once() {
        let cs = three();
        let w = cs.with_whole_input();
        assert_eq!(w.len(), 4);
        assert!(w.masks()[3].is_all_ones());
        assert_eq!(w.masks()[3].name, WHOLE_INPUT_NAME);
        assert_eq!(w.with_whole_input(), w);
        let already = ConceptSet::from_indices(2, vec![("all".into(), vec![0, 1])]).unwrap();
        assert_eq!(already.with_whole_input(), already);
    }

    #[test]
    fn random_masks_popcount_and_determinism() {
        let a = random_masks(20, 100, 7, &mut stream(9, "masks", 0)).unwrap();
        let b = random_masks(20, 100, 7, &mut stream(9, "masks", 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.masks().iter().all(|m| m.popcount() == 7));
        let full = random_masks(6, 3, 6, &mut stream(1, "masks", 0)).unwrap();
        assert!(full.masks().iter().all(ConceptMask::is_all_ones));
        assert!(random_masks(6, 3, 7, &mut stream(1, "masks", 0)).is_err());
    }

    #[test]
    fn select_top_masks_rules() {
        let cs = three();
        assert_eq!(select_top_masks(&cs, &[0.1, 0.9, 0.5], 3).unwrap(), cs);
        let top = select_top_masks(&cs, &[0.1, 0.9, 0.5], 2).unwrap();
        let names: Vec<_> = top.masks().iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["b", "c"]);
        let tie = select_top_masks(&cs, &[1.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(tie.masks()[0].name, "a");
        assert!(select_top_masks(&cs, &[1.0, 1.0, 1.0], 0).is_err());
        assert!(select_top_masks(&cs, &[1.0, 1.0, 1.0], 4).is_err());
    }

    #[test]
    fn parse_and_reject() {
        let cs = ConceptSet::parse("x: 0 2\n\ny: 1 2\n", 3, "mem").unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(ConceptSet::parse(&cs.to_text(), 3, "mem").unwrap(), cs);
        assert!(ConceptSet::parse("x: 0 0\n", 3, "mem").is_err());
        assert!(ConceptSet::parse("x: 3\n", 3, "mem").is_err());
        assert!(ConceptSet::parse("x 0\n", 3, "mem").is_err());
        assert!(ConceptSet::parse("x: 0\nx: 1\n", 3, "mem").is_err());
        assert_ne!(cs.content_hash(), three().content_hash());
    }

    #[test]
    fn overlapping_and_redundant_masks_allowed() {
        ConceptSet::from_indices(3, vec![("a".into(), vec![0, 1]), ("b".into(), vec![0, 1]), ("c".into(), vec![1])]).unwrap();
    }

    #[test]
    fn ground_truth_parse() {
        let gt = GroundTruthConcepts::parse("cls_a: b0 b1\ncls_b: b2\n", "mem").unwrap();
        assert_eq!(gt.get("cls_a").unwrap(), ["b0", "b1"]);
        assert_eq!(GroundTruthConcepts::parse(&gt.to_text(), "mem").unwrap(), gt);
    }

    proptest! {
        #[test]
        fn masking_is_idempotent(x in prop::collection::vec(-5.0f64..5.0, 8), seed in 0u64..1000) {
            let cs = random_masks(8, 1, 3, &mut stream(seed, "m", 0)).unwrap();
            let m = &cs.masks()[0];
            let once = apply_mask(&x, m).unwrap();
            prop_assert_eq!(apply_mask(&once, m).unwrap(), once);
        }

        #[test]
        fn select_is_subset_of_size_keep(scores in prop::collection::vec(-1.0f64..1.0, 3), keep in 1usize..=3) {
            let cs = three();
            let sel = select_top_masks(&cs, &scores, keep).unwrap();
            prop_assert_eq!(sel.len(), keep);
            for m in sel.masks() {
                prop_assert!(cs.position(&m.name).is_some());
            }
        }
    }
}
