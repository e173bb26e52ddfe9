//! Dataset schema, loaders, splits, triple sampling and the synthetic
//! multi-domain corpus.

mod corpus;
mod example;
mod sampling;
mod split;
mod synth;
mod vocab;
mod windows;

pub use corpus::{AnswerRecord, Corpus, QueryRecord};
pub use example::{load_jsonl, read_jsonl, write_jsonl, Example, Label};
pub use sampling::{sample_triples, RegimeKind, RegimeSpec, TripleSample, TrainingTriple};
pub use split::{split_80_10_10, split_qids, SplitName, Splits};
pub use synth::{domain_name, generate_synthetic, SynthConfig, SynthManifest};
pub use vocab::{TokenId, Vocab, PAD, UNK};
pub use windows::{parse_marked, sliding_window_negatives};
