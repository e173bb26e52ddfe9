//! The joint objective and one optimisation step under either regime.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, GradReverseConfig, Graph, NodeId, ParamSet, Tensor};
use crate::data::{TokenId, TrainingTriple};
use crate::error::{Error, Result};
use crate::models::{bind_prefix, Discriminator, Model, ModelKind, ScoredOutput, DISC_PREFIX, REL_PREFIX};
use crate::rng;

use super::losses::{adv_loss, hinge_loss, nll_loss};
use super::optim::Adam;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRegime {
    /// Discriminator step, then ranker step, every batch.
    Alternate,
    /// One backward pass updates ranker and discriminator together.
    Simultaneous,
}

fn default_margin() -> f64 {
    0.2
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    32
}
fn default_true() -> bool {
    true
}
fn default_negatives() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub regime: UpdateRegime,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    /// Whether reversed gradients from discriminator-only samples reach the
    /// ranking model.
    #[serde(default = "default_true")]
    pub target_grad_to_ranker: bool,
    /// Negatives per query in the Duet likelihood loss: the sampled
    /// nonrelevant answer plus in-batch relevant answers of other queries.
    #[serde(default = "default_negatives")]
    pub nll_negatives: usize,
}

impl TrainConfig {
    pub fn new(lambda: f64, regime: UpdateRegime) -> Self {
        TrainConfig {
            lambda,
            regime,
            margin: default_margin(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            max_epochs: 30,
            patience: 3,
            seed: 0,
            target_grad_to_ranker: true,
            nll_negatives: default_negatives(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be a finite non-negative number");
        }
        if !(self.margin > 0.0) {
            return fail("margin must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.nll_negatives == 0 {
            return fail("nll_negatives must be at least 1");
        }
        Ok(())
    }
}

/// Ranker and discriminator parameters with their optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamSet,
    pub adam: Adam,
}

impl TrainState {
    pub fn new(model: &Model, disc: &Discriminator, seed: u64) -> Result<Self> {
        let mut params = model.init_params(rng::derive_seed(seed, "init.rel"));
        params.merge(disc.init_params(rng::derive_seed(seed, "init.disc")))?;
        Ok(TrainState { params, adam: Adam::new() })
    }
}

/// Nodes of the joint loss for one triple.
#[derive(Clone, Debug)]
pub struct LossParts {
    pub total: NodeId,
    pub relevance: NodeId,
    pub adv_pos: NodeId,
    pub adv_neg: NodeId,
    pub logits_pos: NodeId,
    pub logits_neg: NodeId,
}

/// Per-step averages and discriminator hit counts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    /// Mean joint loss over labeled triples.
    pub joint_loss: f64,
    pub relevance_loss: f64,
    /// Mean over all adversarial terms, unweighted.
    pub adv_loss: f64,
    pub disc_correct: usize,
    pub disc_total: usize,
    pub labeled: usize,
    pub discriminator_only: usize,
}

struct Forward {
    pos: ScoredOutput,
    neg: ScoredOutput,
    extra: Vec<NodeId>,
}

fn forward(g: &mut Graph, p: &Bound, model: &Model, t: &TrainingTriple, extra: &[&[TokenId]]) -> Result<Forward> {
    let mut docs: Vec<&[TokenId]> = vec![&t.doc_rel, &t.doc_nonrel];
    docs.extend_from_slice(extra);
    let mut outs = model.score_many(g, p, &t.query, &docs)?.into_iter();
    let pos = outs.next().expect("two documents scored");
    let neg = outs.next().expect("two documents scored");
    Ok(Forward { pos, neg, extra: outs.map(|o| o.score).collect() })
}

fn relevance(g: &mut Graph, kind: ModelKind, cfg: &TrainConfig, f: &Forward) -> Result<NodeId> {
    match kind {
        ModelKind::Cossim => hinge_loss(g, f.pos.score, f.neg.score, cfg.margin),
        ModelKind::DuetDist => {
            let mut scores = vec![f.pos.score, f.neg.score];
            scores.extend(&f.extra);
            nll_loss(g, &scores)
        }
    }
}

/// `(L_adv, logits)`; with `detach` the representations carry no gradient
/// back into the ranking model.
fn adversarial(
    g: &mut Graph,
    p: &Bound,
    disc: &Discriminator,
    out: &ScoredOutput,
    domain: usize,
    reversal: GradReverseConfig,
    detach: bool,
) -> Result<(NodeId, NodeId)> {
    let reps: BTreeMap<String, NodeId> = if detach {
        let mut m = BTreeMap::new();
        for name in &disc.config().inspected_reps {
            let id = *out.reps.get(name).ok_or_else(|| Error::Input(format!("missing representation {name:?}")))?;
            m.insert(name.clone(), g.detach(id)?);
        }
        m
    } else {
        out.reps.clone()
    };
    let logits = disc.discriminate(g, p, &reps, reversal)?;
    Ok((adv_loss(g, logits, domain)?, logits))
}

fn weighted_sum(g: &mut Graph, base: Option<NodeId>, a: NodeId, b: NodeId, lambda: f64) -> Result<NodeId> {
    let both = g.add(a, b)?;
    let weighted = g.scale(both, lambda)?;
    match base {
        Some(r) => g.add(r, weighted),
        None => Ok(weighted),
    }
}

/// `L_rel + λ·(L_adv(q, doc_r) + L_adv(q, doc_nr))`.
///
/// `extra_negatives` are additional documents for the Duet likelihood loss
/// and are ignored by CosSim.
pub fn joint_loss(
    g: &mut Graph,
    p: &Bound,
    model: &Model,
    disc: &Discriminator,
    triple: &TrainingTriple,
    extra_negatives: &[&[TokenId]],
    cfg: &TrainConfig,
) -> Result<LossParts> {
    if triple.discriminator_only {
        return Err(Error::Input("discriminator-only triples have no relevance loss".into()));
    }
    let extra = if model.kind() == ModelKind::Cossim { &[][..] } else { extra_negatives };
    let f = forward(g, p, model, triple, extra)?;
    let reversal = GradReverseConfig::new(cfg.lambda)?;
    let rel = relevance(g, model.kind(), cfg, &f)?;
    let (adv_pos, logits_pos) = adversarial(g, p, disc, &f.pos, triple.domain, reversal, false)?;
    let (adv_neg, logits_neg) = adversarial(g, p, disc, &f.neg, triple.domain, reversal, false)?;
    let total = weighted_sum(g, Some(rel), adv_pos, adv_neg, cfg.lambda)?;
    Ok(LossParts { total, relevance: rel, adv_pos, adv_neg, logits_pos, logits_neg })
}

/// Relevant answers of other labeled triples in the batch, used as extra
/// likelihood negatives for triple `i`.
fn in_batch_negatives(batch: &[TrainingTriple], i: usize, want: usize) -> Vec<&[TokenId]> {
    let mut out = Vec::new();
    for k in 1..batch.len() {
        if out.len() >= want {
            break;
        }
        let other = &batch[(i + k) % batch.len()];
        if !other.discriminator_only && other.doc_rel != batch[i].doc_rel && other.doc_rel != batch[i].doc_nonrel {
            out.push(other.doc_rel.as_slice());
        }
    }
    out
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn grads_with_prefix(bound: &Bound, g: &Graph, loss: NodeId, prefix: &str) -> Result<BTreeMap<String, Tensor>> {
    let grads = g.backward(loss)?;
    Ok(bound.collect_grads(g, &grads).into_iter().filter(|(k, _)| k.starts_with(prefix)).collect())
}

/// One batch: builds a single graph, computes the losses and applies Adam
/// according to `cfg.regime`.
pub fn train_step(model: &Model, disc: &Discriminator, state: &mut TrainState, batch: &[TrainingTriple], cfg: &TrainConfig) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let reversal = GradReverseConfig::new(cfg.lambda)?;
    let kind = model.kind();
    let mut g = Graph::new();
    let bound = state.params.bind(&mut g);

    let mut fwd = Vec::with_capacity(batch.len());
    for (i, t) in batch.iter().enumerate() {
        let extra = if kind == ModelKind::DuetDist && !t.discriminator_only {
            in_batch_negatives(batch, i, cfg.nll_negatives - 1)
        } else {
            Vec::new()
        };
        fwd.push(forward(&mut g, &bound, model, t, &extra)?);
    }

    let mut stats = StepStats::default();
    let mut rel_terms = Vec::new();
    let mut joint_terms = Vec::new();
    let mut adv_terms = Vec::new();
    let count = |g: &Graph, logits: NodeId, domain: usize, stats: &mut StepStats| {
        stats.disc_total += 1;
        if argmax(g.value(logits).data()) == domain {
            stats.disc_correct += 1;
        }
    };

    match cfg.regime {
        UpdateRegime::Simultaneous => {
            let mut terms = Vec::with_capacity(batch.len());
            for (t, f) in batch.iter().zip(&fwd) {
                let detach = t.discriminator_only && !cfg.target_grad_to_ranker;
                let (ap, lp) = adversarial(&mut g, &bound, disc, &f.pos, t.domain, reversal, detach)?;
                let (an, ln) = adversarial(&mut g, &bound, disc, &f.neg, t.domain, reversal, detach)?;
                count(&g, lp, t.domain, &mut stats);
                count(&g, ln, t.domain, &mut stats);
                adv_terms.extend([ap, an]);
                let rel = if t.discriminator_only { None } else { Some(relevance(&mut g, kind, cfg, f)?) };
                let term = weighted_sum(&mut g, rel, ap, an, cfg.lambda)?;
                if let Some(r) = rel {
                    rel_terms.push(r);
                    joint_terms.push(term);
                }
                terms.push(term);
            }
            let loss = g.mean(&terms)?;
            let grads = grads_with_prefix(&bound, &g, loss, "")?;
            state.adam.update(&mut state.params, &grads, cfg.learning_rate)?;
        }
        UpdateRegime::Alternate => {
            // Step A: discriminator only, on detached representations.
            let mut a_terms = Vec::with_capacity(2 * batch.len());
            for (t, f) in batch.iter().zip(&fwd) {
                for out in [&f.pos, &f.neg] {
                    let (l, logits) = adversarial(&mut g, &bound, disc, out, t.domain, reversal, true)?;
                    count(&g, logits, t.domain, &mut stats);
                    a_terms.push(l);
                }
            }
            adv_terms.extend(&a_terms);
            let loss_a = g.mean(&a_terms)?;
            let grads = grads_with_prefix(&bound, &g, loss_a, DISC_PREFIX)?;
            state.adam.update(&mut state.params, &grads, cfg.learning_rate)?;

            // Step B: ranker only, against the updated (frozen) discriminator.
            let disc_bound = bind_prefix(&state.params, &mut g, DISC_PREFIX);
            let mut b_terms = Vec::with_capacity(batch.len());
            for (t, f) in batch.iter().zip(&fwd) {
                if t.discriminator_only && !cfg.target_grad_to_ranker {
                    continue;
                }
                let (ap, _) = adversarial(&mut g, &disc_bound, disc, &f.pos, t.domain, reversal, false)?;
                let (an, _) = adversarial(&mut g, &disc_bound, disc, &f.neg, t.domain, reversal, false)?;
                let rel = if t.discriminator_only { None } else { Some(relevance(&mut g, kind, cfg, f)?) };
                let term = weighted_sum(&mut g, rel, ap, an, cfg.lambda)?;
                if let Some(r) = rel {
                    rel_terms.push(r);
                    joint_terms.push(term);
                }
                b_terms.push(term);
            }
            if !b_terms.is_empty() {
                let loss_b = g.mean(&b_terms)?;
                let grads = grads_with_prefix(&bound, &g, loss_b, REL_PREFIX)?;
                state.adam.update(&mut state.params, &grads, cfg.learning_rate)?;
            }
        }
    }

    let mean = |g: &Graph, xs: &[NodeId]| if xs.is_empty() { 0.0 } else { xs.iter().map(|&x| g.scalar(x)).sum::<f64>() / xs.len() as f64 };
    stats.joint_loss = mean(&g, &joint_terms);
    stats.relevance_loss = mean(&g, &rel_terms);
    stats.adv_loss = mean(&g, &adv_terms);
    stats.discriminator_only = batch.iter().filter(|t| t.discriminator_only).count();
    stats.labeled = batch.len() - stats.discriminator_only;
    for v in [stats.joint_loss, stats.relevance_loss, stats.adv_loss] {
        if !v.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
    }
    Ok(stats)
}
