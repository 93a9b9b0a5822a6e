use crate::error::{CometError, Result};

/// Numerically stable softmax (max subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Softmax over negated distances and the negative log-likelihood of
/// `true_class`. The loss is computed as `logsumexp − score[true]` so it stays
/// accurate when the true-class probability underflows.
pub fn softmax_nll(neg_scores: &[f64], true_class: usize) -> Result<(Vec<f64>, f64)> {
    if neg_scores.len() < 2 {
        return Err(CometError::validation("class scores", "need at least 2 classes"));
    }
    if true_class >= neg_scores.len() {
        return Err(CometError::Index {
            context: "class scores",
            index: true_class,
            len: neg_scores.len(),
        });
    }
    if let Some(i) = neg_scores.iter().position(|s| !s.is_finite()) {
        return Err(CometError::NonFinite(format!("class score {i}")));
    }
    let max = neg_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = neg_scores.iter().map(|s| (s - max).exp()).sum();
    let log_z = max + z.ln();
    let probs = softmax(neg_scores);
    Ok((probs, log_z - neg_scores[true_class]))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let (p, loss) = softmax_nll(&[0.0, 0.0], 0).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        let (p, _) = softmax_nll(&[0.0, -(3.0f64).ln()], 0).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        assert!(matches!(softmax_nll(&[0.0, 1.0], 2), Err(CometError::Index { .. })));
    }

    #[test]
    fn matches_naive_formula() {
        let s = [0.3, -1.7, 2.2, 0.0, -0.4];
        let naive: Vec<f64> = {
            let e: Vec<f64> = s.iter().map(|x: &f64| x.exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|x| x / z).collect()
        };
        let (p, loss) = softmax_nll(&s, 2).unwrap();
        for (a, b) in p.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((loss + naive[2].ln()).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    proptest! {
        #[test]
        fn shift_invariant_and_normalized(
            s in prop::collection::vec(-50.0f64..50.0, 2..8),
            c in -100.0f64..100.0,
        ) {
            let (p, _) = softmax_nll(&s, 0).unwrap();
            let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
            let (q, _) = softmax_nll(&shifted, 0).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
