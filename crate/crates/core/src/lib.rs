//! Few-shot classification of tabular data with concept learners.
//!
//! Each concept is a binary mask over input features. A concept learner
//! embeds the masked input; classes are represented by one prototype per
//! concept (the mean support embedding) and a query is scored by the sum of
//! its per-concept distances to each class's prototypes. The ProtoNet
//! baseline is the single whole-input concept case.

pub mod error;
pub mod nn;
pub mod rng;

pub use error::{CometError, Result};
pub mod concepts;
pub mod data;
pub mod episodes;
pub mod exec;
pub mod model;
pub mod interpret;
