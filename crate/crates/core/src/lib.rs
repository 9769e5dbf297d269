//! Benchmarking engine for post-hoc explanation methods.
//!
//! Datasets come with pixel-level ground truth for the class-conditional
//! signal. Reference models are trained on them, explanation methods are run
//! on the held-out test split, and the resulting attribution maps are scored
//! against the ground truth with top-k precision, an optimal-transport based
//! EMD score, and importance mass accuracy.

pub mod error;
pub mod explainers;
pub mod dataset;
pub mod distractor;
pub mod foundation;
pub mod harness;
pub mod lesion;
pub mod metrics;
pub mod reporting;
pub mod models;
pub mod tris;

pub use error::{Error, Result};
