//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{RegimeSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::models::{CosSimConfig, DuetDistConfig, ModelConfig, ModelKind};
use crate::rng::fnv1a;
use crate::training::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Where examples come from: a JSONL file or the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Path(PathBuf),
    Synth(SynthConfig),
}

/// CosSim sizes; the vocabulary size comes from the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosSimParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl Default for CosSimParams {
    fn default() -> Self {
        let c = CosSimConfig::default();
        CosSimParams { embed_dim: c.embed_dim, hidden_dim: c.hidden_dim, max_len: c.max_len }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorParams {
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    /// Defaults to the model's standard taps.
    #[serde(default)]
    pub inspected_reps: Option<Vec<String>>,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}

impl Default for DiscriminatorParams {
    fn default() -> Self {
        DiscriminatorParams { hidden_widths: default_hidden(), inspected_reps: None }
    }
}

fn default_pool_k() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Master seed; every random stream derives from it by label.
    pub seed: u64,
    pub regime: RegimeSpec,
    pub model: ModelKind,
    #[serde(default)]
    pub cossim: CosSimParams,
    #[serde(default)]
    pub duet: DuetDistConfig,
    #[serde(default)]
    pub discriminator: DiscriminatorParams,
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default = "default_pool_k")]
    pub pool_k: usize,
    pub output_dir: PathBuf,
    /// Held-out domains for `experiment`; empty means every domain.
    #[serde(default)]
    pub targets: Vec<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported config version {}", self.version)));
        }
        if self.pool_k == 0 {
            return Err(Error::Config("pool_k must be at least 1".into()));
        }
        if let DataSource::Synth(s) = &self.data {
            s.validate()?;
        }
        self.regime.validate()?;
        self.train.validate()?;
        self.model_config(2).validate()
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        match self.model {
            ModelKind::Cossim => ModelConfig::Cossim(CosSimConfig {
                vocab_size,
                embed_dim: self.cossim.embed_dim,
                hidden_dim: self.cossim.hidden_dim,
                max_len: self.cossim.max_len,
            }),
            ModelKind::DuetDist => ModelConfig::DuetDist(self.duet.clone()),
        }
    }

    /// Stable hash of the canonical JSON form, used to tie checkpoints to
    /// the configuration that produced them.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a(json.as_bytes()))
    }

    /// Hash that ties a checkpoint to its configuration. The epoch budget
    /// and output location are left out so a run can be extended or moved.
    pub fn checkpoint_hash(&self) -> String {
        let mut c = self.clone();
        c.train.max_epochs = 0;
        c.output_dir = PathBuf::new();
        c.hash()
    }
}
