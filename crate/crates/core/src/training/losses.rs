//! Relevance and adversarial losses.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

/// `max(0, margin − s_pos + s_neg)`.
pub fn hinge_loss(g: &mut Graph, s_pos: NodeId, s_neg: NodeId, margin: f64) -> Result<NodeId> {
    let gap = g.sub(s_neg, s_pos)?;
    let shifted = g.add_scalar(gap, margin)?;
    g.relu(shifted)
}

/// `−log softmax(scores)[0]`; `scores[0]` is the positive, the rest are
/// negatives.
pub fn nll_loss(g: &mut Graph, scores: &[NodeId]) -> Result<NodeId> {
    if scores.len() < 2 {
        return Err(Error::Input("nll_loss needs at least one negative".into()));
    }
    let all = g.concat(scores)?;
    neg_log_prob(g, all, 0)
}

/// Cross-entropy of `softmax(logits)` against the true domain.
pub fn adv_loss(g: &mut Graph, logits: NodeId, d_true: usize) -> Result<NodeId> {
    let n = g.shape(logits).iter().product::<usize>();
    if d_true >= n {
        return Err(Error::Input(format!("domain id {d_true} out of range for {n} domains")));
    }
    neg_log_prob(g, logits, d_true)
}

fn neg_log_prob(g: &mut Graph, logits: NodeId, index: usize) -> Result<NodeId> {
    let p = g.softmax(logits)?;
    let logp = g.log(p)?;
    let picked = g.pick(logp, index)?;
    g.scale(picked, -1.0)
}
