//! Parameter checkpoints: one line of compact JSON header, a newline, then
//! the raw little-endian `f64` data of every tensor in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tensor};
use crate::data::Vocab;
use crate::error::{Error, Result};

use super::{DiscriminatorConfig, ModelConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub model: ModelConfig,
    pub discriminator: DiscriminatorConfig,
    pub seed: u64,
    /// Hash of the configuration that produced the checkpoint.
    pub config_hash: String,
    pub vocab: Vocab,
    /// Training state: epochs, optimizer step counts, log position.
    #[serde(default)]
    pub meta: serde_json::Value,
    /// Filled in by [`write_checkpoint`].
    #[serde(default)]
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: ParamSet,
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut header = checkpoint.header.clone();
    header.version = CHECKPOINT_VERSION;
    header.tensors = checkpoint.tensors.iter().map(|(k, t)| TensorEntry { name: k.clone(), shape: t.shape().to_vec() }).collect();
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    for (_, t) in checkpoint.tensors.iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let ctx = || format!("writing checkpoint {}", path.display());
    let mut f = fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    f.write_all(&bytes).map_err(|e| Error::io(ctx(), e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    let newline = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline]).map_err(|e| bad(&format!("bad header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    let mut body = &bytes[newline + 1..];
    let mut tensors = ParamSet::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        if body.len() < 8 * n {
            return Err(bad(&format!("truncated data for {}", entry.name)));
        }
        let data = body[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        body = &body[8 * n..];
        let t = Tensor::new(entry.shape.clone(), data).map_err(|_| bad(&format!("bad shape for {}", entry.name)))?;
        tensors.insert(entry.name.clone(), t);
    }
    if !body.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    Ok(Checkpoint { header, tensors })
}
