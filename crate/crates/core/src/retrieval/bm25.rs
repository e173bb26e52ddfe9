//! Okapi BM25 over an in-memory document collection.
//!
//! `score(D, Q) = Σ_{t ∈ Q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|D|/avgdl))`
//! with `idf(t) = ln((N − df + 1)/(df + 0.5) + 1)`. The `+ 1` outside the
//! ratio keeps idf positive for every document frequency; the numerator uses
//! add-one smoothing, so a term in every document of a one-document
//! collection gets `ln(5/3)`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Collection statistics plus per-document term counts.
#[derive(Clone, Debug, Default)]
pub struct CorpusStats {
    pub doc_count: usize,
    pub avg_doc_len: f64,
    pub doc_freq: HashMap<String, usize>,
    pub doc_len: HashMap<String, usize>,
    term_freq: HashMap<String, HashMap<String, usize>>,
    order: Vec<String>,
}

impl CorpusStats {
    /// Builds statistics from `(aid, tokens)` pairs. Repeated aids are
    /// rejected.
    pub fn build<'a, I, S>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [S])>,
        S: AsRef<str> + 'a,
    {
        let mut stats = CorpusStats::default();
        let mut total = 0usize;
        for (aid, tokens) in docs {
            if stats.doc_len.contains_key(aid) {
                return Err(Error::Data(format!("duplicate document id {aid}")));
            }
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t.as_ref().to_string()).or_default() += 1;
            }
            for term in tf.keys() {
                *stats.doc_freq.entry(term.clone()).or_default() += 1;
            }
            total += tokens.len();
            stats.doc_len.insert(aid.to_string(), tokens.len());
            stats.term_freq.insert(aid.to_string(), tf);
            stats.order.push(aid.to_string());
        }
        stats.doc_count = stats.order.len();
        stats.avg_doc_len = if stats.doc_count > 0 { total as f64 / stats.doc_count as f64 } else { 0.0 };
        Ok(stats)
    }

    /// Document ids in insertion order.
    pub fn doc_ids(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, aid: &str) -> bool {
        self.doc_len.contains_key(aid)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 1.0) / (df + 0.5) + 1.0).ln()
    }
}

/// BM25 score of document `aid` for `query` (distinct terms count once).
pub fn bm25_score<S: AsRef<str>>(query: &[S], aid: &str, stats: &CorpusStats, params: Bm25Params) -> Result<f64> {
    let tf = stats.term_freq.get(aid).ok_or_else(|| Error::Input(format!("unknown document id {aid}")))?;
    let dl = stats.doc_len[aid] as f64;
    let norm = if stats.avg_doc_len > 0.0 { dl / stats.avg_doc_len } else { 0.0 };
    let terms: BTreeSet<&str> = query.iter().map(AsRef::as_ref).collect();
    let mut score = 0.0;
    for term in terms {
        let Some(&f) = tf.get(term) else { continue };
        let f = f as f64;
        let sat = f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * norm));
        score += stats.idf(term) * sat;
    }
    Ok(score)
}
