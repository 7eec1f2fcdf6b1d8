//! Extractive explanation engine for recommendations.
//!
//! For a (user, item) pair, candidate review sentences are scored by stacked
//! graph-attention layers over a user/item/attribute/sentence graph followed
//! by a deep & cross feature-interaction network. The final explanation is
//! the K-subset maximizing total score minus a tf-idf redundancy penalty.

pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod planted;
pub mod selector;
pub mod training;

pub use error::{Error, Result};
