//! Soft Bayesian additive regression trees.
//!
//! [`forest::ForestHandle`] is the embeddable sampler; [`models`] builds
//! regression, probit, varying-coefficient and partial-linear fits on top of it.

pub mod archive;
pub mod error;
pub mod forest;
pub mod models;
pub mod preprocess;
pub mod priors;
pub mod sampler;
pub mod simulate;
pub mod slice;
pub mod summaries;
pub mod trees;

pub use error::{Error, Result};
pub use forest::ForestHandle;
pub use priors::Hypers;
pub use sampler::Opts;
