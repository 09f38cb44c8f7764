//! Anomaly detection with a classifier trained to tell apart clusters of the normal data.
//!
//! Normal training data is split into sub-clusters (k-means or existing
//! labels), a classifier learns to tell the sub-clusters apart, and test
//! samples are scored by how confidently that classifier recognises them.
//! Higher scores always mean "more normal".

pub mod classifier;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod harness;
pub mod numerics;
pub mod scoring;

pub use error::{Error, Result};
