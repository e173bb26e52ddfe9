//! Ranking models and the domain discriminator.
//!
//! Every model scores a (query, document) pair inside a caller-owned
//! [`Graph`](crate::autodiff::Graph) and exposes named intermediate
//! representations that the discriminator can inspect. Ranking parameters
//! are named `rel.*` and discriminator parameters `disc.*`, so both live in
//! one [`ParamSet`](crate::autodiff::ParamSet).

mod checkpoint;
mod cossim;
mod discriminator;
mod duet;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, NodeId, ParamSet};
use crate::data::{TokenId, Vocab, PAD};
use crate::error::{Error, Result};
use crate::rng;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use cossim::{CosSim, CosSimConfig};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use duet::{trigraph_bag, DuetDist, DuetDistConfig};

/// Prefix of ranking-model parameter names.
pub const REL_PREFIX: &str = "rel.";
/// Prefix of discriminator parameter names.
pub const DISC_PREFIX: &str = "disc.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cossim,
    DuetDist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Cossim(CosSimConfig),
    DuetDist(DuetDistConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Cossim(_) => ModelKind::Cossim,
            ModelConfig::DuetDist(_) => ModelKind::DuetDist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Cossim(c) => c.validate(),
            ModelConfig::DuetDist(c) => c.validate(),
        }
    }
}

/// Score node plus named representation nodes. `reps` always has `"joint"`.
#[derive(Clone, Debug)]
pub struct ScoredOutput {
    pub score: NodeId,
    pub reps: BTreeMap<String, NodeId>,
}

/// A ranking model bound to its vocabulary-dependent lookup tables.
#[derive(Clone, Debug)]
pub enum Model {
    Cossim(CosSim),
    DuetDist(DuetDist),
}

impl Model {
    pub fn new(config: &ModelConfig, vocab: &Vocab) -> Result<Model> {
        config.validate()?;
        Ok(match config {
            ModelConfig::Cossim(c) => {
                if c.vocab_size < vocab.len() {
                    return Err(Error::Config(format!(
                        "cossim vocab_size {} is smaller than the corpus vocabulary ({})",
                        c.vocab_size,
                        vocab.len()
                    )));
                }
                Model::Cossim(CosSim::new(c.clone()))
            }
            ModelConfig::DuetDist(c) => Model::DuetDist(DuetDist::new(c.clone(), vocab)),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Cossim(m) => ModelConfig::Cossim(m.config().clone()),
            Model::DuetDist(m) => ModelConfig::DuetDist(m.config().clone()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config().kind()
    }

    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut r = rng::rng(seed);
        match self {
            Model::Cossim(m) => m.init_params(&mut r),
            Model::DuetDist(m) => m.init_params(&mut r),
        }
    }

    pub fn score(&self, g: &mut Graph, params: &Bound, query: &[TokenId], doc: &[TokenId]) -> Result<ScoredOutput> {
        let mut out = self.score_many(g, params, query, &[doc])?;
        Ok(out.remove(0))
    }

    /// Scores several documents against one query, encoding the query once.
    pub fn score_many(&self, g: &mut Graph, params: &Bound, query: &[TokenId], docs: &[&[TokenId]]) -> Result<Vec<ScoredOutput>> {
        match self {
            Model::Cossim(m) => m.score_many(g, params, query, docs),
            Model::DuetDist(m) => m.score_many(g, params, query, docs),
        }
    }

    /// Length of each named representation.
    pub fn rep_dims(&self) -> BTreeMap<String, usize> {
        match self {
            Model::Cossim(m) => m.rep_dims(),
            Model::DuetDist(m) => m.rep_dims(),
        }
    }

    /// Representations the discriminator inspects unless configured otherwise.
    pub fn default_inspected_reps(&self) -> Vec<String> {
        match self {
            Model::Cossim(_) => vec!["joint".into()],
            Model::DuetDist(_) => vec!["joint".into(), "hadamard_pooled".into(), "fc1".into()],
        }
    }

    /// Scores without building gradients the caller keeps.
    pub fn score_value(&self, params: &ParamSet, query: &[TokenId], doc: &[TokenId]) -> Result<f64> {
        let mut g = Graph::new();
        let bound = bind_prefix(params, &mut g, REL_PREFIX);
        let out = self.score(&mut g, &bound, query, doc)?;
        Ok(g.scalar(out.score))
    }
}

/// Binds only the parameters whose names start with `prefix`.
pub fn bind_prefix(params: &ParamSet, g: &mut Graph, prefix: &str) -> Bound {
    let mut subset = ParamSet::new();
    for (k, t) in params.iter().filter(|(k, _)| k.starts_with(prefix)) {
        subset.insert(k.clone(), t.clone());
    }
    subset.bind(g)
}

/// `concat(q, d, q ⊙ d)`.
pub fn joint_representation(g: &mut Graph, q_rep: NodeId, d_rep: NodeId) -> Result<NodeId> {
    let (sq, sd) = (g.shape(q_rep).to_vec(), g.shape(d_rep).to_vec());
    if sq.len() != 1 || sq != sd {
        return Err(Error::Shape { op: "joint_representation", shapes: vec![sq, sd] });
    }
    let prod = g.mul(q_rep, d_rep)?;
    g.concat(&[q_rep, d_rep, prod])
}

/// Drops pad ids and truncates to `max_len`; empty results are an error.
pub(crate) fn prepare(tokens: &[TokenId], max_len: usize, what: &str) -> Result<Vec<usize>> {
    let ids: Vec<usize> = tokens.iter().filter(|&&t| t != PAD).take(max_len).map(|&t| t as usize).collect();
    if ids.is_empty() {
        return Err(Error::Input(format!("{what} is empty after removing padding")));
    }
    Ok(ids)
}
