//! Training-triple sampling under the cross-topic and cross-collection
//! regimes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::{Corpus, SplitName, TokenId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    CrossTopic,
    CrossCollection,
}

/// Which domains train the ranker and which one is held out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub kind: RegimeKind,
    pub train_domains: Vec<String>,
    pub target_domain: String,
    #[serde(default)]
    pub equal_sampling: bool,
    #[serde(default)]
    pub feed_target_to_disc: bool,
}

impl RegimeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_domains.is_empty() {
            return Err(Error::Config("regime needs at least one training domain".into()));
        }
        if self.train_domains.contains(&self.target_domain) {
            return Err(Error::Config(format!("target domain {} is also a training domain", self.target_domain)));
        }
        let mut sorted = self.train_domains.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.train_domains.len() {
            return Err(Error::Config("duplicate training domain".into()));
        }
        Ok(())
    }

    /// Discriminator class per domain: training domains in sorted order,
    /// then the target when it feeds the discriminator.
    pub fn domain_ids(&self) -> BTreeMap<String, usize> {
        let mut sorted = self.train_domains.clone();
        sorted.sort();
        let mut ids: BTreeMap<String, usize> = sorted.into_iter().enumerate().map(|(i, d)| (d, i)).collect();
        if self.feed_target_to_disc {
            let n = ids.len();
            ids.insert(self.target_domain.clone(), n);
        }
        ids
    }

    pub fn num_domains(&self) -> usize {
        self.train_domains.len() + usize::from(self.feed_target_to_disc)
    }
}

/// `(q, doc_r, doc_nr)` with the domain class of the query.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTriple {
    pub query: Vec<TokenId>,
    pub doc_rel: Vec<TokenId>,
    pub doc_nonrel: Vec<TokenId>,
    pub domain: usize,
    /// Unlabeled target sample: trains the discriminator loss only.
    pub discriminator_only: bool,
    /// Index into [`Corpus::queries`].
    pub query_index: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TripleSample {
    pub triples: Vec<TrainingTriple>,
    /// Queries dropped because no negative could be found.
    pub skipped: usize,
    /// Labeled triples per training domain.
    pub per_domain: BTreeMap<String, usize>,
    pub discriminator_only: usize,
}

/// Draws one epoch of triples from the train split.
///
/// Negatives come from the query's judged nonrelevant answers, falling back
/// to a random answer of the same domain. With `equal_sampling` every
/// training domain contributes the same number of triples (the smallest
/// domain's count). With `feed_target_to_disc`, one discriminator-only
/// triple from the target's train split follows every `|D_train|` labeled
/// triples.
pub fn sample_triples(corpus: &Corpus, regime: &RegimeSpec, seed: u64) -> Result<TripleSample> {
    regime.validate()?;
    let ids = regime.domain_ids();
    let kind = regime.kind;
    let mut r = rng::rng(seed);
    let mut out = TripleSample::default();

    let mut per_domain: Vec<Vec<TrainingTriple>> = Vec::new();
    let mut train_domains = regime.train_domains.clone();
    train_domains.sort();
    for d in &train_domains {
        let pool: Vec<usize> = corpus
            .answers
            .iter()
            .enumerate()
            .filter(|(_, a)| a.split == SplitName::Train && a.domain_key(kind) == d)
            .map(|(i, _)| i)
            .collect();
        let mut triples = Vec::new();
        for qi in corpus.queries_in(kind, d, SplitName::Train) {
            let q = &corpus.queries[qi];
            let relevant: Vec<usize> = q.relevant().collect();
            let negatives: Vec<usize> = q.nonrelevant().filter(|a| !relevant.contains(a)).collect();
            for &rel in &relevant {
                let neg = if let Some(&n) = negatives.choose(&mut r) {
                    Some(n)
                } else {
                    let fallback: Vec<usize> = pool.iter().copied().filter(|a| !relevant.contains(a)).collect();
                    fallback.choose(&mut r).copied()
                };
                let Some(neg) = neg else {
                    out.skipped += 1;
                    continue;
                };
                triples.push(TrainingTriple {
                    query: q.tokens.clone(),
                    doc_rel: corpus.answers[rel].tokens.clone(),
                    doc_nonrel: corpus.answers[neg].tokens.clone(),
                    domain: ids[d],
                    discriminator_only: false,
                    query_index: qi,
                });
            }
        }
        per_domain.push(triples);
    }

    if regime.equal_sampling {
        let n = per_domain.iter().map(Vec::len).min().unwrap_or(0);
        for triples in &mut per_domain {
            triples.shuffle(&mut r);
            triples.truncate(n);
        }
    }
    for (d, triples) in train_domains.iter().zip(&per_domain) {
        out.per_domain.insert(d.clone(), triples.len());
    }
    let mut labeled: Vec<TrainingTriple> = per_domain.into_iter().flatten().collect();
    labeled.shuffle(&mut r);

    if !regime.feed_target_to_disc {
        out.triples = labeled;
        return Ok(out);
    }

    let target = &regime.target_domain;
    let mut target_queries: Vec<usize> = corpus.queries_in(kind, target, SplitName::Train).collect();
    let target_pool: Vec<usize> = corpus
        .answers
        .iter()
        .enumerate()
        .filter(|(_, a)| a.split == SplitName::Train && a.domain_key(kind) == target)
        .map(|(i, _)| i)
        .collect();
    if target_queries.is_empty() || target_pool.len() < 2 {
        return Err(Error::Data(format!("target domain {target} has no training-split samples for the discriminator")));
    }
    target_queries.shuffle(&mut r);
    let k = train_domains.len();
    let n_disc = labeled.len() / k;
    let mut triples = Vec::with_capacity(labeled.len() + n_disc);
    for (i, t) in labeled.into_iter().enumerate() {
        triples.push(t);
        if (i + 1) % k == 0 {
            let qi = target_queries[(i / k) % target_queries.len()];
            let q = &corpus.queries[qi];
            let judged: Vec<usize> = q.judgments.iter().map(|(a, _)| *a).collect();
            let a = *judged.choose(&mut r).unwrap_or(&target_pool[r.gen_range(0..target_pool.len())]);
            let others: Vec<usize> = target_pool.iter().copied().filter(|&b| b != a).collect();
            let b = *others.choose(&mut r).expect("target pool has two answers");
            triples.push(TrainingTriple {
                query: q.tokens.clone(),
                doc_rel: corpus.answers[a].tokens.clone(),
                doc_nonrel: corpus.answers[b].tokens.clone(),
                domain: ids[target],
                discriminator_only: true,
                query_index: qi,
            });
            out.discriminator_only += 1;
        }
    }
    out.triples = triples;
    Ok(out)
}
