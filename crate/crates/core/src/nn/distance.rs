use serde::{Deserialize, Serialize};

use super::matrix::dot;
use crate::error::{check_dim, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    SquaredEuclidean,
    Cosine,
}

impl std::str::FromStr for DistanceKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "euclidean" | "squared_euclidean" => Ok(DistanceKind::SquaredEuclidean),
            "cosine" => Ok(DistanceKind::Cosine),
            other => Err(format!("unknown distance '{other}' (expected euclidean or cosine)")),
        }
    }
}

pub fn distance(kind: DistanceKind, a: &[f64], b: &[f64]) -> Result<f64> {
    check_dim("distance operands", a.len(), b.len())?;
    Ok(distance_unchecked(kind, a, b))
}

pub(crate) fn distance_unchecked(kind: DistanceKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        DistanceKind::SquaredEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        DistanceKind::Cosine => {
            let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
            if na == 0.0 || nb == 0.0 {
                // degenerate embedding counts as maximally dissimilar
                1.0
            } else {
                1.0 - dot(a, b) / (na * nb)
            }
        }
    }
}

/// Distance together with its gradients with respect to both operands.
pub(crate) fn distance_with_grad(kind: DistanceKind, a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    match kind {
        DistanceKind::SquaredEuclidean => {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let d = dot(&diff, &diff);
            let ga: Vec<f64> = diff.iter().map(|v| 2.0 * v).collect();
            let gb = ga.iter().map(|v| -v).collect();
            (d, ga, gb)
        }
        DistanceKind::Cosine => {
            let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
            if na == 0.0 || nb == 0.0 {
                return (1.0, vec![0.0; a.len()], vec![0.0; b.len()]);
            }
            let ab = dot(a, b);
            let cos = ab / (na * nb);
            let ga = a
                .iter()
                .zip(b)
                .map(|(x, y)| -(y / (na * nb) - cos * x / (na * na)))
                .collect();
            let gb = a
                .iter()
                .zip(b)
                .map(|(x, y)| -(x / (na * nb) - cos * y / (nb * nb)))
                .collect();
            (1.0 - cos, ga, gb)
        }
    }
}
