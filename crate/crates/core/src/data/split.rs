use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

use super::Example;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits<T> {
    pub train: T,
    pub dev: T,
    pub test: T,
}

/// Assigns distinct query keys to train/dev/test in 80/10/10 proportion.
///
/// Keys are ordered by a seeded hash, so the assignment depends only on the
/// key set and the seed. Counts are `round(0.8n)`, `round(0.1n)` and the
/// remainder.
pub fn split_qids(keys: &BTreeSet<String>, seed: u64) -> Result<HashMap<String, SplitName>> {
    let n = keys.len();
    if n < 10 {
        return Err(Error::Data(format!("80-10-10 split needs at least 10 distinct qids, got {n}")));
    }
    let mut order: Vec<(u64, &String)> = keys.iter().map(|k| (derive_seed(seed, k), k)).collect();
    order.sort();
    let n_train = (0.8 * n as f64).round() as usize;
    let n_dev = (0.1 * n as f64).round() as usize;
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(i, (_, k))| {
            let s = if i < n_train {
                SplitName::Train
            } else if i < n_train + n_dev {
                SplitName::Dev
            } else {
                SplitName::Test
            };
            (k.clone(), s)
        })
        .collect())
}

pub(crate) fn query_key(collection: &str, qid: &str) -> String {
    format!("{collection}\u{1f}{qid}")
}

/// Splits rows by query (never by row).
pub fn split_80_10_10(examples: &[Example], seed: u64) -> Result<Splits<Vec<Example>>> {
    let keys: BTreeSet<String> = examples.iter().map(|e| query_key(&e.collection, &e.qid)).collect();
    let assign = split_qids(&keys, seed)?;
    let mut out: Splits<Vec<Example>> = Splits::default();
    for e in examples {
        match assign[&query_key(&e.collection, &e.qid)] {
            SplitName::Train => out.train.push(e.clone()),
            SplitName::Dev => out.dev.push(e.clone()),
            SplitName::Test => out.test.push(e.clone()),
        }
    }
    Ok(out)
}
