//! Tokenization, BM25 and telescoped candidate pools.

mod bm25;
mod pools;
mod tokenize;

pub use bm25::{bm25_score, Bm25Params, CorpusStats};
pub use pools::{build_pools, pools_to_jsonl, Candidate, EvalPool, PoolQuery};
pub use tokenize::tokenize;
