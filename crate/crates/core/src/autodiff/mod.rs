//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Graph`] is an append-only tape. Every op computes its output eagerly
//! and records enough to replay the chain rule in reverse. The
//! [`Graph::gradient_reverse`] op is the identity going forward and scales
//! the incoming gradient by `-lambda` going back, which is how the rankers
//! are pushed away from domain-discriminative features.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use graph::{softmax, GradReverseConfig, Gradients, Graph, NodeId, LOG_FLOOR};
pub use params::{Bound, ParamSet};
pub use tensor::Tensor;
