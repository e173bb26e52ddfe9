//! CosSim-mini: a bidirectional recurrent encoder shared by query and
//! document, max-pooled over time, scored by cosine similarity.
//!
//! The cell has a single update gate:
//! `z = σ(x·Wz + h·Uz + bz)`, `c = tanh(x·Wc + h·Uc + bc)`,
//! `h' = h + z ⊙ (c − h)`.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, NodeId, ParamSet, Tensor};
use crate::data::TokenId;
use crate::error::{Error, Result};

use super::{joint_representation, prepare, ScoredOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosSimConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl Default for CosSimConfig {
    fn default() -> Self {
        CosSimConfig { vocab_size: 2, embed_dim: 32, hidden_dim: 32, max_len: 64 }
    }
}

impl CosSimConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_len", self.max_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("cossim {name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CosSim {
    cfg: CosSimConfig,
}

const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

impl CosSim {
    pub fn new(cfg: CosSimConfig) -> Self {
        CosSim { cfg }
    }

    pub fn config(&self) -> &CosSimConfig {
        &self.cfg
    }

    pub(crate) fn init_params(&self, r: &mut ChaCha8Rng) -> ParamSet {
        let (e, h) = (self.cfg.embed_dim, self.cfg.hidden_dim);
        let mut p = ParamSet::new();
        p.insert_weight("rel.embed", self.cfg.vocab_size, e, r);
        for dir in DIRECTIONS {
            p.insert_weight(format!("rel.{dir}.wz"), e, h, r);
            p.insert_weight(format!("rel.{dir}.uz"), h, h, r);
            p.insert_bias(format!("rel.{dir}.bz"), h);
            p.insert_weight(format!("rel.{dir}.wc"), e, h, r);
            p.insert_weight(format!("rel.{dir}.uc"), h, h, r);
            p.insert_bias(format!("rel.{dir}.bc"), h);
        }
        p
    }

    pub(crate) fn rep_dims(&self) -> BTreeMap<String, usize> {
        let h = 2 * self.cfg.hidden_dim;
        [("q_rep", h), ("d_rep", h), ("joint", 3 * h)].into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn direction(&self, g: &mut Graph, p: &Bound, x: NodeId, len: usize, dir: &str) -> Result<NodeId> {
        let node = |n: &str| p.node(&format!("rel.{dir}.{n}"));
        let xz = g.matmul(x, node("wz")?)?;
        let xz = g.add(xz, node("bz")?)?;
        let xc = g.matmul(x, node("wc")?)?;
        let xc = g.add(xc, node("bc")?)?;
        let (uz, uc) = (node("uz")?, node("uc")?);
        let mut h = g.constant(Tensor::zeros(&[self.cfg.hidden_dim]));
        let mut states = Vec::with_capacity(len);
        let order: Vec<usize> = if dir == "fwd" { (0..len).collect() } else { (0..len).rev().collect() };
        for t in order {
            let hz = g.matmul(h, uz)?;
            let xzt = g.row(xz, t)?;
            let pre_z = g.add(xzt, hz)?;
            let z = g.sigmoid(pre_z)?;
            let hc = g.matmul(h, uc)?;
            let xct = g.row(xc, t)?;
            let pre_c = g.add(xct, hc)?;
            let c = g.tanh(pre_c)?;
            let delta = g.sub(c, h)?;
            let step = g.mul(z, delta)?;
            h = g.add(h, step)?;
            states.push(h);
        }
        let stacked = g.stack(&states)?;
        g.max_axis(stacked, 0)
    }

    /// Encodes one sequence into `concat(max_t h_fwd, max_t h_bwd)`.
    pub fn encode(&self, g: &mut Graph, p: &Bound, tokens: &[TokenId], what: &str) -> Result<NodeId> {
        let ids = prepare(tokens, self.cfg.max_len, what)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(Error::Input(format!("token id {bad} outside vocabulary of {}", self.cfg.vocab_size)));
        }
        let x = g.embedding(p.node("rel.embed")?, &ids)?;
        let f = self.direction(g, p, x, ids.len(), "fwd")?;
        let b = self.direction(g, p, x, ids.len(), "bwd")?;
        g.concat(&[f, b])
    }

    pub(crate) fn score_many(&self, g: &mut Graph, p: &Bound, query: &[TokenId], docs: &[&[TokenId]]) -> Result<Vec<ScoredOutput>> {
        let q = self.encode(g, p, query, "query")?;
        docs.iter()
            .map(|doc| {
                let d = self.encode(g, p, doc, "document")?;
                let score = g.cosine(q, d)?;
                let joint = joint_representation(g, q, d)?;
                let reps = [("q_rep", q), ("d_rep", d), ("joint", joint)].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                Ok(ScoredOutput { score, reps })
            })
            .collect()
    }
}
