//! Telescoped evaluation pools: the top-k BM25 candidates of each query.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

use super::{bm25_score, Bm25Params, CorpusStats};

/// A query to telescope, with the ids of its relevant answers.
#[derive(Clone, Debug)]
pub struct PoolQuery {
    pub qid: String,
    pub terms: Vec<String>,
    pub relevant: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub aid: String,
    pub bm25_score: f64,
    pub label: Label,
}

/// Candidates sorted by BM25 descending, ties by aid ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPool {
    pub qid: String,
    pub candidates: Vec<Candidate>,
    pub pool_size: usize,
    /// No relevant answer survived telescoping.
    pub unjudgeable: bool,
}

impl EvalPool {
    pub fn has_relevant(&self) -> bool {
        self.candidates.iter().any(|c| c.label == Label::Relevant)
    }
}

pub(crate) fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Keeps the top `k` documents of `stats` for every query.
pub fn build_pools(queries: &[PoolQuery], stats: &CorpusStats, k: usize, params: Bm25Params) -> Result<Vec<EvalPool>> {
    if k == 0 {
        return Err(Error::Config("pool size k must be >= 1".into()));
    }
    queries
        .iter()
        .map(|q| {
            let mut scored = stats
                .doc_ids()
                .iter()
                .map(|aid| Ok((bm25_score(&q.terms, aid, stats, params)?, aid.as_str())))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| by_score_then_id(*a, *b));
            scored.truncate(k);
            let candidates: Vec<Candidate> = scored
                .into_iter()
                .map(|(s, aid)| Candidate {
                    aid: aid.to_string(),
                    bm25_score: s,
                    label: if q.relevant.contains(aid) { Label::Relevant } else { Label::Nonrelevant },
                })
                .collect();
            let unjudgeable = !candidates.iter().any(|c| c.label == Label::Relevant);
            Ok(EvalPool { qid: q.qid.clone(), candidates, pool_size: k, unjudgeable })
        })
        .collect()
}

#[derive(Serialize)]
struct PoolLine<'a> {
    qid: &'a str,
    candidates: Vec<(&'a str, f64, Label)>,
}

/// Writes pools as JSON lines `{qid, candidates: [[aid, score, label], ...]}`.
pub fn pools_to_jsonl<W: Write>(pools: &[EvalPool], mut out: W) -> Result<()> {
    for p in pools {
        let line = PoolLine {
            qid: &p.qid,
            candidates: p.candidates.iter().map(|c| (c.aid.as_str(), c.bm25_score, c.label)).collect(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io("writing pools", e))?;
    }
    Ok(())
}
