//! Loading data, splitting it, and telescoping evaluation pools.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::autodiff::{Graph, ParamSet};
use crate::data::{generate_synthetic, load_jsonl, Corpus, Example, Label, RegimeKind, SplitName, Vocab};
use crate::error::{Error, Result};
use crate::evaluation::{score_pool, MetricsReport};
use crate::models::{bind_prefix, Model, REL_PREFIX};
use crate::retrieval::{build_pools, Bm25Params, CorpusStats, EvalPool, PoolQuery};
use crate::rng::derive_seed;

use super::{DataSource, ExperimentConfig};

pub fn load_examples(cfg: &ExperimentConfig) -> Result<Vec<Example>> {
    match &cfg.data {
        DataSource::Path(p) => load_jsonl(p),
        DataSource::Synth(s) => generate_synthetic(s),
    }
}

/// Interned, split corpus for a configuration.
pub fn prepare_corpus(cfg: &ExperimentConfig) -> Result<Corpus> {
    let examples = load_examples(cfg)?;
    if examples.is_empty() {
        return Err(Error::Data("dataset is empty".into()));
    }
    let mut corpus = Corpus::build(&examples, Vocab::new())?;
    corpus.assign_splits(derive_seed(cfg.seed, "split"))?;
    Ok(corpus)
}

/// Telescoped pools plus the corpus indices behind them.
#[derive(Clone, Debug, Default)]
pub struct EvalSet {
    pub pools: Vec<EvalPool>,
    /// Query index of each pool.
    pub queries: Vec<usize>,
    /// Answer index of each candidate, parallel to `pools[i].candidates`.
    pub answers: Vec<Vec<usize>>,
}

impl EvalSet {
    pub fn judgeable(&self) -> usize {
        self.pools.iter().filter(|p| !p.unjudgeable).count()
    }
}

/// Pools for the queries of `domains` in `split`. Candidates come from the
/// answers of the query's collection in the same split.
pub fn build_eval_set(corpus: &Corpus, kind: RegimeKind, domains: &[String], split: SplitName, k: usize) -> Result<EvalSet> {
    let wanted: BTreeSet<&str> = domains.iter().map(String::as_str).collect();
    let mut by_collection: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, q) in corpus.queries.iter().enumerate() {
        if q.split == split && wanted.contains(q.domain_key(kind)) {
            by_collection.entry(q.collection.as_str()).or_default().push(i);
        }
    }
    let mut out = EvalSet::default();
    for (collection, queries) in by_collection {
        let universe = corpus.universe(collection, split);
        let stats = CorpusStats::build(universe.iter().map(|&a| (corpus.answers[a].aid.as_str(), corpus.answers[a].terms.as_slice())))?;
        let index: HashMap<&str, usize> = universe.iter().map(|&a| (corpus.answers[a].aid.as_str(), a)).collect();
        let pool_queries: Vec<PoolQuery> = queries
            .iter()
            .map(|&qi| {
                let q = &corpus.queries[qi];
                PoolQuery {
                    qid: q.qid.clone(),
                    terms: q.terms.clone(),
                    relevant: q
                        .judgments
                        .iter()
                        .filter(|(_, l)| *l == Label::Relevant)
                        .map(|(a, _)| corpus.answers[*a].aid.clone())
                        .collect(),
                }
            })
            .collect();
        let pools = build_pools(&pool_queries, &stats, k, Bm25Params::default())?;
        for (pool, qi) in pools.into_iter().zip(queries) {
            out.answers.push(pool.candidates.iter().map(|c| index[c.aid.as_str()]).collect());
            out.queries.push(qi);
            out.pools.push(pool);
        }
    }
    Ok(out)
}

/// Scores every judgeable pool with the ranking parameters in `params`.
pub fn evaluate(model: &Model, params: &ParamSet, corpus: &Corpus, set: &EvalSet) -> Result<MetricsReport> {
    let mut results = Vec::with_capacity(set.pools.len());
    let mut excluded = 0;
    for ((pool, &qi), answers) in set.pools.iter().zip(&set.queries).zip(&set.answers) {
        if pool.unjudgeable {
            excluded += 1;
            continue;
        }
        let mut g = Graph::new();
        let bound = bind_prefix(params, &mut g, REL_PREFIX);
        let docs: Vec<&[u32]> = answers.iter().map(|&a| corpus.answers[a].tokens.as_slice()).collect();
        let outs = model.score_many(&mut g, &bound, &corpus.queries[qi].tokens, &docs)?;
        let scores: HashMap<&str, f64> =
            pool.candidates.iter().zip(&outs).map(|(c, o)| (c.aid.as_str(), g.scalar(o.score))).collect();
        results.push(score_pool(pool, |aid| Ok(scores[aid]))?);
    }
    if results.is_empty() {
        return Err(Error::Data("no judgeable evaluation pools".into()));
    }
    MetricsReport::new(&results, excluded)
}
