//! Duet-distributed: the distributed sub-network of Duet at desk scale.
//!
//! Each token becomes a bag of hashed character trigraphs of `#word#`. Query
//! and document are convolved separately; the query is max-pooled and
//! projected to `q_rep`, the document windows are projected and multiplied
//! elementwise with `q_rep`. Max-pooling over windows gives
//! `hadamard_pooled`, which feeds two fully connected layers.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, NodeId, ParamSet};
use crate::data::{TokenId, Vocab};
use crate::error::{Error, Result};
use crate::rng::fnv1a;

use super::{joint_representation, prepare, ScoredOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuetDistConfig {
    pub trigraph_vocab: usize,
    pub conv_channels: usize,
    pub conv_width: usize,
    pub query_len: usize,
    pub doc_len: usize,
    pub hidden_dim: usize,
}

impl Default for DuetDistConfig {
    fn default() -> Self {
        DuetDistConfig { trigraph_vocab: 2000, conv_channels: 32, conv_width: 3, query_len: 20, doc_len: 300, hidden_dim: 32 }
    }
}

impl DuetDistConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("trigraph_vocab", self.trigraph_vocab),
            ("conv_channels", self.conv_channels),
            ("conv_width", self.conv_width),
            ("query_len", self.query_len),
            ("doc_len", self.doc_len),
            ("hidden_dim", self.hidden_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("duet {name} must be positive")));
            }
        }
        if self.query_len > self.doc_len {
            return Err(Error::Config("duet query_len must not exceed doc_len".into()));
        }
        if self.conv_width > self.query_len {
            return Err(Error::Config("duet conv_width must not exceed query_len".into()));
        }
        Ok(())
    }
}

/// Trigraph counts of `#word#`, hashed into `buckets`, sorted by bucket.
pub fn trigraph_bag(word: &str, buckets: usize) -> Vec<(usize, f64)> {
    let marked: Vec<char> = format!("#{word}#").chars().collect();
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for w in marked.windows(3) {
        let s: String = w.iter().collect();
        *counts.entry((fnv1a(s.as_bytes()) % buckets as u64) as usize).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

#[derive(Clone, Debug)]
pub struct DuetDist {
    cfg: DuetDistConfig,
    bags: Vec<Vec<(usize, f64)>>,
}

impl DuetDist {
    pub fn new(cfg: DuetDistConfig, vocab: &Vocab) -> Self {
        let bags = vocab.tokens().iter().map(|t| trigraph_bag(t, cfg.trigraph_vocab)).collect();
        DuetDist { cfg, bags }
    }

    pub fn config(&self) -> &DuetDistConfig {
        &self.cfg
    }

    pub(crate) fn init_params(&self, r: &mut ChaCha8Rng) -> ParamSet {
        let c = &self.cfg;
        let (ch, h, wc) = (c.conv_channels, c.hidden_dim, c.conv_width * c.conv_channels);
        let mut p = ParamSet::new();
        p.insert_weight("rel.trigraph_embed", c.trigraph_vocab, ch, r);
        p.insert_weight("rel.q_conv", wc, ch, r);
        p.insert_bias("rel.q_conv_b", ch);
        p.insert_weight("rel.d_conv", wc, ch, r);
        p.insert_bias("rel.d_conv_b", ch);
        p.insert_weight("rel.q_fc", ch, h, r);
        p.insert_bias("rel.q_fc_b", h);
        p.insert_weight("rel.d_proj", ch, h, r);
        p.insert_bias("rel.d_proj_b", h);
        p.insert_weight("rel.fc1", h, h, r);
        p.insert_bias("rel.fc1_b", h);
        p.insert_weight("rel.out", h, 1, r);
        p
    }

    pub(crate) fn rep_dims(&self) -> BTreeMap<String, usize> {
        let h = self.cfg.hidden_dim;
        [("q_rep", h), ("d_rep", h), ("hadamard_pooled", h), ("joint", 3 * h), ("fc1", h)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    /// `tanh(unfold(bags) · W + b)`, shape `[windows, channels]`.
    fn convolve(&self, g: &mut Graph, p: &Bound, tokens: &[TokenId], max_len: usize, side: &str, what: &str) -> Result<NodeId> {
        let ids = prepare(tokens, max_len, what)?;
        let mut bags = Vec::with_capacity(ids.len().max(self.cfg.conv_width));
        for id in ids {
            let bag = self.bags.get(id).ok_or_else(|| Error::Input(format!("token id {id} outside vocabulary")))?;
            bags.push(bag.clone());
        }
        // Short sequences are padded with zero rows up to one full window.
        while bags.len() < self.cfg.conv_width {
            bags.push(Vec::new());
        }
        let x = g.embedding_bag(p.node("rel.trigraph_embed")?, &bags)?;
        let windows = g.unfold(x, self.cfg.conv_width)?;
        let conv = g.matmul(windows, p.node(&format!("rel.{side}_conv"))?)?;
        let conv = g.add(conv, p.node(&format!("rel.{side}_conv_b"))?)?;
        g.tanh(conv)
    }

    fn dense(g: &mut Graph, p: &Bound, x: NodeId, w: &str) -> Result<NodeId> {
        let y = g.matmul(x, p.node(w)?)?;
        g.add(y, p.node(&format!("{w}_b"))?)
    }

    pub(crate) fn score_many(&self, g: &mut Graph, p: &Bound, query: &[TokenId], docs: &[&[TokenId]]) -> Result<Vec<ScoredOutput>> {
        let qc = self.convolve(g, p, query, self.cfg.query_len, "q", "query")?;
        let qc = g.max_axis(qc, 0)?;
        let q = Self::dense(g, p, qc, "rel.q_fc")?;
        let q_rep = g.tanh(q)?;
        docs.iter()
            .map(|doc| {
                let dc = self.convolve(g, p, doc, self.cfg.doc_len, "d", "document")?;
                let dw = Self::dense(g, p, dc, "rel.d_proj")?;
                let dw = g.tanh(dw)?;
                let d_rep = g.max_axis(dw, 0)?;
                let had = g.mul(dw, q_rep)?;
                let pooled = g.max_axis(had, 0)?;
                let fc1 = Self::dense(g, p, pooled, "rel.fc1")?;
                let fc1 = g.tanh(fc1)?;
                // No output bias: both ranking losses are invariant to a shared score shift.
                let score = g.matmul(fc1, p.node("rel.out")?)?;
                let joint = joint_representation(g, q_rep, d_rep)?;
                let reps = [("q_rep", q_rep), ("d_rep", d_rep), ("hadamard_pooled", pooled), ("joint", joint), ("fc1", fc1)]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect();
                Ok(ScoredOutput { score, reps })
            })
            .collect()
    }
}
