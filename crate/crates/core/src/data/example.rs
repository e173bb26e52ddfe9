use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Nonrelevant,
}

/// One judged (query, answer) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub query: String,
    pub answer: String,
    pub label: Label,
    pub domain: String,
    pub collection: String,
    pub qid: String,
    pub aid: String,
}

/// Parses JSON-lines examples; `origin` names the source in error messages.
pub fn read_jsonl<R: Read>(reader: R, origin: &Path) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let line_err = |line: usize, message: String| Error::DataLine { path: origin.to_path_buf(), line, message };
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| line_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(&line).map_err(|e| line_err(lineno, e.to_string()))?;
        if ex.qid.is_empty() || ex.aid.is_empty() {
            return Err(line_err(lineno, "empty qid or aid".into()));
        }
        if !seen.insert((ex.collection.clone(), ex.qid.clone(), ex.aid.clone())) {
            return Err(line_err(
                lineno,
                format!("duplicate (qid, aid) = ({}, {}) in collection {}", ex.qid, ex.aid, ex.collection),
            ));
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Example>> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_jsonl(f, path)
}

pub fn write_jsonl<W: Write>(examples: &[Example], mut out: W) -> Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n").map_err(|e| Error::io("writing examples", e))?;
    }
    Ok(())
}
