//! Ranking a telescoped pool by model score, and P@1 / MRR.

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::retrieval::EvalPool;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub qid: String,
    /// Aids by model score descending, ties by aid ascending.
    pub ranking: Vec<String>,
    /// 1-based rank of the first relevant answer.
    pub first_relevant_rank: Option<usize>,
}

impl QueryResult {
    pub fn p_at_1(&self) -> f64 {
        if self.first_relevant_rank == Some(1) {
            1.0
        } else {
            0.0
        }
    }

    pub fn reciprocal_rank(&self) -> f64 {
        self.first_relevant_rank.map_or(0.0, |r| 1.0 / r as f64)
    }
}

/// Scores every candidate with `score(aid)` and ranks them.
pub fn score_pool<F>(pool: &EvalPool, mut score: F) -> Result<QueryResult>
where
    F: FnMut(&str) -> Result<f64>,
{
    if pool.unjudgeable || !pool.has_relevant() {
        return Err(Error::Input(format!("pool for {} has no relevant candidate", pool.qid)));
    }
    let mut scored = Vec::with_capacity(pool.candidates.len());
    for c in &pool.candidates {
        let s = score(&c.aid)?;
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("score of {} for {}", c.aid, pool.qid)));
        }
        scored.push((s, c));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.aid.cmp(&b.1.aid)));
    let first_relevant_rank = scored.iter().position(|(_, c)| c.label == Label::Relevant).map(|i| i + 1);
    Ok(QueryResult { qid: pool.qid.clone(), ranking: scored.iter().map(|(_, c)| c.aid.clone()).collect(), first_relevant_rank })
}

fn mean_of(results: &[QueryResult], f: impl Fn(&QueryResult) -> f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Input("no query results".into()));
    }
    Ok(results.iter().map(f).sum::<f64>() / results.len() as f64)
}

/// Fraction of queries whose top-ranked answer is relevant.
pub fn precision_at_1(results: &[QueryResult]) -> Result<f64> {
    mean_of(results, QueryResult::p_at_1)
}

/// Mean reciprocal rank of the first relevant answer.
pub fn mrr(results: &[QueryResult]) -> Result<f64> {
    mean_of(results, QueryResult::reciprocal_rank)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerQuery {
    pub qid: String,
    pub p1: f64,
    pub rr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_at_1: f64,
    pub mrr: f64,
    pub n_queries: usize,
    /// Pools dropped as unjudgeable.
    pub n_excluded: usize,
    /// Sorted by qid.
    pub per_query: Vec<PerQuery>,
}

impl MetricsReport {
    pub fn new(results: &[QueryResult], n_excluded: usize) -> Result<Self> {
        let mut per_query: Vec<PerQuery> =
            results.iter().map(|r| PerQuery { qid: r.qid.clone(), p1: r.p_at_1(), rr: r.reciprocal_rank() }).collect();
        per_query.sort_by(|a, b| a.qid.cmp(&b.qid));
        Ok(MetricsReport { p_at_1: precision_at_1(results)?, mrr: mrr(results)?, n_queries: results.len(), n_excluded, per_query })
    }
}

/// Scores every judgeable pool; unjudgeable pools are counted, not scored.
pub fn evaluate_pools<F>(pools: &[EvalPool], mut score: F) -> Result<MetricsReport>
where
    F: FnMut(&str, &str) -> Result<f64>,
{
    let mut results = Vec::with_capacity(pools.len());
    let mut excluded = 0;
    for pool in pools {
        if pool.unjudgeable || !pool.has_relevant() {
            excluded += 1;
            continue;
        }
        results.push(score_pool(pool, |aid| score(&pool.qid, aid))?);
    }
    MetricsReport::new(&results, excluded)
}
