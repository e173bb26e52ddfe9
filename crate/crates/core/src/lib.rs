//! Adversarial cross-domain regularization for neural ranking models.
//!
//! The crate bundles a small reverse-mode autodiff engine with a
//! gradient-reversal operation, two passage rankers (a recurrent cosine
//! model and the distributed half of Duet), a domain discriminator, the joint
//! relevance + domain-confusion objective, BM25 telescoping, ranking metrics
//! with a Wilcoxon signed-rank test, and a synthetic multi-domain corpus.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
