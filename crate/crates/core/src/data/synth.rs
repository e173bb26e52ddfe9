//! Synthetic multi-domain QA corpus with controllable domain shift.
//!
//! Words are pronounceable pseudo-words. The shared vocabulary carries the
//! relevance signal: a query has four content terms, its relevant answer
//! repeats three of them and every nonrelevant sibling repeats exactly one.
//! Filler slots in queries and answers are drawn uniformly from the domain's
//! own vocabulary with probability `domain_shift`, otherwise from shared
//! words that do not touch the query. Domain words say nothing about
//! relevance; they only make the domain recognizable.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::{Example, Label};

const QUERY_TERMS: usize = 4;
const QUERY_FILLERS: usize = 2;
const ANSWER_TERMS: usize = 6;
const ANSWER_FILLERS: usize = 4;
const REL_OVERLAP: usize = 3;

const SHARED_ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const DOMAIN_ONSETS: [&str; 9] = ["v", "w", "z", "h", "j", "x", "q", "c", "y"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const MAX_DOMAINS: usize = DOMAIN_ONSETS.len() * VOWELS.len();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_domains: usize,
    pub vocab_shared: usize,
    pub vocab_per_domain: usize,
    pub queries_per_domain: usize,
    pub answers_per_query: usize,
    pub domain_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_domains: 3,
            vocab_shared: 400,
            vocab_per_domain: 60,
            queries_per_domain: 300,
            answers_per_query: 5,
            domain_shift: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(3..=MAX_DOMAINS).contains(&self.num_domains) {
            return fail(format!("num_domains must be in 3..={MAX_DOMAINS}, got {}", self.num_domains));
        }
        if !(0.0..=1.0).contains(&self.domain_shift) {
            return fail(format!("domain_shift must be in [0, 1], got {}", self.domain_shift));
        }
        if self.answers_per_query < 2 {
            return fail(format!("answers_per_query must be at least 2, got {}", self.answers_per_query));
        }
        let min_shared = 2 * (QUERY_TERMS + QUERY_FILLERS + ANSWER_TERMS + ANSWER_FILLERS);
        if self.vocab_shared < min_shared {
            return fail(format!("vocab_shared must be at least {min_shared}, got {}", self.vocab_shared));
        }
        if self.vocab_per_domain == 0 {
            return fail("vocab_per_domain must be at least 1".into());
        }
        if self.queries_per_domain < 10 {
            return fail(format!("queries_per_domain must be at least 10, got {}", self.queries_per_domain));
        }
        Ok(())
    }
}

/// Sidecar written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub domains: BTreeMap<String, DomainCounts>,
    pub total_examples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub queries: usize,
    pub examples: usize,
}

impl SynthManifest {
    pub fn new(config: &SynthConfig, examples: &[Example]) -> Self {
        let mut domains: BTreeMap<String, DomainCounts> = BTreeMap::new();
        for e in examples {
            let c = domains.entry(e.domain.clone()).or_insert(DomainCounts { queries: 0, examples: 0 });
            c.examples += 1;
        }
        for c in domains.values_mut() {
            c.queries = c.examples / config.answers_per_query;
        }
        SynthManifest { config: config.clone(), domains, total_examples: examples.len() }
    }
}

/// Name of synthetic domain `i`; the collection is named the same way.
pub fn domain_name(i: usize) -> String {
    format!("topic{i}")
}

fn collection_name(i: usize) -> String {
    format!("coll{i}")
}

fn syllable(onsets: &[&str], i: usize) -> String {
    format!("{}{}", onsets[i / VOWELS.len() % onsets.len()], VOWELS[i % VOWELS.len()])
}

fn shared_word(i: usize) -> String {
    let n = SHARED_ONSETS.len() * VOWELS.len();
    (0..3).map(|k| syllable(&SHARED_ONSETS, i / n.pow(k) % n)).collect()
}

/// Domain words start with a syllable no shared word can contain.
fn domain_word(domain: usize, i: usize) -> String {
    let n = SHARED_ONSETS.len() * VOWELS.len();
    let marker = syllable(&DOMAIN_ONSETS, domain);
    let tail: String = (0..2).map(|k| syllable(&SHARED_ONSETS, i / n.pow(k) % n)).collect();
    format!("{marker}{tail}")
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    r: ChaCha8Rng,
}

impl Gen<'_> {
    fn sample_distinct(&mut self, n: usize, k: usize, exclude: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let i = self.r.gen_range(0..n);
            if !exclude.contains(&i) && !out.contains(&i) {
                out.push(i);
            }
        }
        out
    }

    /// Filler words: a domain word with probability `domain_shift`, else a
    /// shared word outside `avoid`. Shared picks are appended to `avoid`.
    fn fillers(&mut self, domain: usize, n: usize, avoid: &mut Vec<usize>) -> Vec<String> {
        (0..n)
            .map(|_| {
                if self.r.gen_bool(self.cfg.domain_shift) {
                    domain_word(domain, self.r.gen_range(0..self.cfg.vocab_per_domain))
                } else {
                    let w = self.sample_distinct(self.cfg.vocab_shared, 1, avoid)[0];
                    avoid.push(w);
                    shared_word(w)
                }
            })
            .collect()
    }

    fn text(&mut self, mut words: Vec<String>) -> String {
        words.shuffle(&mut self.r);
        words.join(" ")
    }

    fn answer(&mut self, domain: usize, content: &[usize], overlap: &[usize]) -> String {
        let mut used: Vec<usize> = content.to_vec();
        let fresh = self.sample_distinct(self.cfg.vocab_shared, ANSWER_TERMS - overlap.len(), &used);
        used.extend(&fresh);
        let mut words: Vec<String> = overlap.iter().chain(&fresh).map(|&i| shared_word(i)).collect();
        words.extend(self.fillers(domain, ANSWER_FILLERS, &mut used));
        self.text(words)
    }
}

/// Generates `queries_per_domain` queries per domain, each with one relevant
/// and `answers_per_query - 1` nonrelevant answers.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<Example>> {
    cfg.validate()?;
    let mut g = Gen { cfg, r: rng::rng(cfg.seed) };
    let mut out = Vec::with_capacity(cfg.num_domains * cfg.queries_per_domain * cfg.answers_per_query);
    for d in 0..cfg.num_domains {
        let domain = domain_name(d);
        let collection = collection_name(d);
        for q in 0..cfg.queries_per_domain {
            let qid = format!("{domain}-q{q:05}");
            let mut query_shared = g.sample_distinct(cfg.vocab_shared, QUERY_TERMS, &[]);
            let content = query_shared.clone();
            let mut words: Vec<String> = content.iter().map(|&i| shared_word(i)).collect();
            words.extend(g.fillers(d, QUERY_FILLERS, &mut query_shared));
            let query = g.text(words);

            let rel_terms: Vec<usize> = content.choose_multiple(&mut g.r, REL_OVERLAP).copied().collect();
            let mut answers = vec![(g.answer(d, &query_shared, &rel_terms), Label::Relevant)];
            for _ in 1..cfg.answers_per_query {
                let term = *content.choose(&mut g.r).expect("query has content terms");
                answers.push((g.answer(d, &query_shared, &[term]), Label::Nonrelevant));
            }
            answers.shuffle(&mut g.r);
            for (a, (answer, label)) in answers.into_iter().enumerate() {
                out.push(Example {
                    query: query.clone(),
                    answer,
                    label,
                    domain: domain.clone(),
                    collection: collection.clone(),
                    qid: qid.clone(),
                    aid: format!("{domain}-a{q:05}-{a}"),
                });
            }
        }
    }
    Ok(out)
}
