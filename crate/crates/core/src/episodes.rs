//! N-way k-shot episode sampling.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CometError, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSpec {
    pub way: usize,
    pub shot: usize,
    pub query_per_class: usize,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec { way: 5, shot: 5, query_per_class: 16 }
    }
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.way < 2 || self.shot < 1 || self.query_per_class < 1 {
            return Err(CometError::validation(
                "episode spec",
                format!("need way >= 2, shot >= 1, query >= 1; got {self:?}"),
            ));
        }
        Ok(())
    }

    pub fn per_class(&self) -> usize {
        self.shot + self.query_per_class
    }
}

/// One sampled task. Indices are dataset rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    /// Dataset class id at each episode position.
    pub classes: Vec<usize>,
    /// `support[k]` = rows of the support set of position `k`.
    pub support: Vec<Vec<usize>>,
    /// `(row, class position)` pairs.
    pub query: Vec<(usize, usize)>,
}

impl Episode {
    pub fn way(&self) -> usize {
        self.classes.len()
    }

    pub fn support_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().flatten().copied()
    }

    pub fn query_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.query.iter().map(|(r, _)| *r)
    }
}

/// Samples episodes from one dataset split; caches the per-class rows of
/// classes large enough for the spec.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    spec: EpisodeSpec,
    eligible: Vec<(usize, Vec<usize>)>,
}

impl EpisodeSampler {
    pub fn new(ds: &Dataset, spec: EpisodeSpec) -> Result<Self> {
        spec.validate()?;
        let eligible: Vec<(usize, Vec<usize>)> = ds
            .class_rows()
            .into_iter()
            .enumerate()
            .filter(|(_, rows)| rows.len() >= spec.per_class())
            .collect();
        if eligible.len() < spec.way {
            return Err(CometError::Sampling(format!(
                "{}-way episodes need {} classes with >= {} examples each, only {} of {} qualify",
                spec.way,
                spec.way,
                spec.per_class(),
                eligible.len(),
                ds.n_classes()
            )));
        }
        Ok(EpisodeSampler { spec, eligible })
    }

    pub fn spec(&self) -> EpisodeSpec {
        self.spec
    }

    pub fn sample(&self, rng: &mut RngStream) -> Episode {
        let spec = self.spec;
        let picks = sample(rng, self.eligible.len(), spec.way).into_vec();
        let mut classes = Vec::with_capacity(spec.way);
        let mut support = Vec::with_capacity(spec.way);
        let mut query = Vec::with_capacity(spec.way * spec.query_per_class);
        for (pos, &p) in picks.iter().enumerate() {
            let (class, rows) = &self.eligible[p];
            let drawn = sample(rng, rows.len(), spec.per_class()).into_vec();
            classes.push(*class);
            support.push(drawn[..spec.shot].iter().map(|&i| rows[i]).collect());
            query.extend(drawn[spec.shot..].iter().map(|&i| (rows[i], pos)));
        }
        Episode { classes, support, query }
    }
}

pub fn sample_episode(ds: &Dataset, spec: EpisodeSpec, rng: &mut RngStream) -> Result<Episode> {
    Ok(EpisodeSampler::new(ds, spec)?.sample(rng))
}

/// A sampled episode together with how it was drawn, for regression files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub spec: EpisodeSpec,
    pub episode: Episode,
}
