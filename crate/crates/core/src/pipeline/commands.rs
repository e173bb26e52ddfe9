//! The `generate`, `train`, `eval` and `experiment` commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamSet;
use crate::data::{write_jsonl, Corpus, RegimeSpec, SplitName, SynthManifest};
use crate::error::{Error, Result};
use crate::evaluation::{emit_report, render_table, ComparisonRow, MetricsReport, RowLabels};
use crate::models::{read_checkpoint, DiscriminatorConfig, ModelConfig, REL_PREFIX, write_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
use crate::rng::derive_seed;
use crate::training::{Adam, EarlyStopper, EpochLog, FitState, TrainState};

use super::cell::{build_models, evaluate_target, train_cell, TrainedCell};
use super::prepare::{build_eval_set, evaluate, prepare_corpus};
use super::{DataSource, ExperimentConfig};

pub const DATA_FILE: &str = "data.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const EXPERIMENT_JSON: &str = "experiment.json";
pub const EXPERIMENT_TXT: &str = "experiment.txt";
pub const COMPARISON_JSON: &str = "comparison.json";
pub const COMPARISON_TXT: &str = "comparison.txt";

/// Label of the λ = 0 rows.
pub const BASELINE_VARIANT: &str = "baseline";
/// Label of the λ > 0 rows.
pub const ADV_VARIANT: &str = "adv";

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut bytes = Vec::new();
    for entry in log {
        bytes.extend(serde_json::to_vec(entry)?);
        bytes.push(b'\n');
    }
    write_file(path, &bytes)
}

fn source_label(regime: &RegimeSpec) -> String {
    let mut d = regime.train_domains.clone();
    d.sort();
    d.join("+")
}

fn model_label(cfg: &ExperimentConfig) -> String {
    serde_json::to_value(cfg.model).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Debug)]
pub struct GenerateOutput {
    pub data: PathBuf,
    pub manifest: PathBuf,
}

/// Writes the synthetic dataset and its manifest into `output_dir`.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateOutput> {
    let DataSource::Synth(synth) = &cfg.data else {
        return Err(Error::Config("generate needs a \"synth\" data section".into()));
    };
    let examples = crate::data::generate_synthetic(synth)?;
    let data = cfg.output_dir.join(DATA_FILE);
    let manifest = cfg.output_dir.join(MANIFEST_FILE);
    let mut bytes = Vec::new();
    write_jsonl(&examples, &mut bytes)?;
    write_file(&data, &bytes)?;
    write_json(&manifest, &SynthManifest::new(synth, &examples))?;
    Ok(GenerateOutput { data, manifest })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    epoch: usize,
    best_epoch: usize,
    stopped: bool,
    stopper: EarlyStopper,
    adam_steps: BTreeMap<String, u64>,
    log: Vec<EpochLog>,
}

const LAST_PREFIX: &str = "last.";

struct CellConfigs {
    model: ModelConfig,
    disc: DiscriminatorConfig,
}

fn to_checkpoint(cfg: &ExperimentConfig, corpus: &Corpus, cfgs: &CellConfigs, state: &FitState, seed: u64) -> Result<Checkpoint> {
    let mut tensors = state.best.params.clone();
    for (k, t) in state.last.params.iter() {
        tensors.insert(format!("{LAST_PREFIX}{k}"), t.clone());
    }
    let (moments, steps) = state.last.adam.export();
    tensors.merge(moments)?;
    let meta = CheckpointMeta {
        epoch: state.epoch,
        best_epoch: state.best_epoch(),
        stopped: state.stopped,
        stopper: state.stopper.clone(),
        adam_steps: steps,
        log: state.log.clone(),
    };
    Ok(Checkpoint {
        header: CheckpointHeader {
            version: CHECKPOINT_VERSION,
            model: cfgs.model.clone(),
            discriminator: cfgs.disc.clone(),
            seed,
            config_hash: cfg.checkpoint_hash(),
            vocab: corpus.vocab.clone(),
            meta: serde_json::to_value(meta)?,
            tensors: Vec::new(),
        },
        tensors,
    })
}

fn from_checkpoint(ck: &Checkpoint) -> Result<FitState> {
    let meta: CheckpointMeta =
        serde_json::from_value(ck.header.meta.clone()).map_err(|e| Error::Checkpoint(format!("bad training state: {e}")))?;
    let mut best = ParamSet::new();
    let mut last = ParamSet::new();
    for (k, t) in ck.tensors.iter() {
        if let Some(name) = k.strip_prefix(LAST_PREFIX) {
            last.insert(name, t.clone());
        } else if !k.starts_with("adam.") {
            best.insert(k.clone(), t.clone());
        }
    }
    let adam = Adam::import(&ck.tensors, meta.adam_steps)?;
    Ok(FitState {
        last: TrainState { params: last, adam },
        best: TrainState { params: best, adam: Adam::new() },
        epoch: meta.epoch,
        stopper: meta.stopper,
        log: meta.log,
        stopped: meta.stopped,
    })
}

fn load_matching_checkpoint(cfg: &ExperimentConfig, corpus: &Corpus, path: &Path) -> Result<Checkpoint> {
    let ck = read_checkpoint(path)?;
    if ck.header.config_hash != cfg.checkpoint_hash() {
        return Err(Error::Checkpoint(format!("{} was written for a different configuration", path.display())));
    }
    if ck.header.vocab != corpus.vocab {
        return Err(Error::Checkpoint(format!("{} was trained on a different vocabulary", path.display())));
    }
    Ok(ck)
}

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub state: FitState,
}

/// Trains the configured regime and writes the checkpoint and JSONL log
/// after every epoch. With `resume`, continues from the checkpoint in
/// `output_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainOutput> {
    let corpus = prepare_corpus(cfg)?;
    let checkpoint = cfg.output_dir.join(CHECKPOINT_FILE);
    let log = cfg.output_dir.join(TRAIN_LOG_FILE);
    let seed = derive_seed(cfg.seed, "train");
    let start = if resume { Some(from_checkpoint(&load_matching_checkpoint(cfg, &corpus, &checkpoint)?)?) } else { None };
    let (model, disc) = build_models(cfg, &corpus, &cfg.regime)?;
    let parts = CellConfigs { model: model.config(), disc: disc.config().clone() };
    let mut save = |state: &FitState| -> Result<()> {
        write_checkpoint(&checkpoint, &to_checkpoint(cfg, &corpus, &parts, state, seed)?)?;
        write_log(&log, &state.log)
    };
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(format!("creating {}", cfg.output_dir.display()), e))?;
    let cell = train_cell(cfg, &corpus, &cfg.regime, &cfg.train, seed, start, &mut save)?;
    save(&cell.fit)?;
    Ok(TrainOutput { checkpoint, log, state: cell.fit })
}

#[derive(Debug)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub comparison: Option<ComparisonRow>,
    pub files: Vec<PathBuf>,
}

/// Evaluates a checkpoint: the target domain's test split, or the training
/// domains' dev split. `pool_k` overrides the configured pool size. With
/// `compare`, also writes a delta report against a previously written
/// metrics file.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    split: SplitName,
    pool_k: Option<usize>,
    compare: Option<&Path>,
) -> Result<EvalOutput> {
    let corpus = prepare_corpus(cfg)?;
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    let ck = load_matching_checkpoint(cfg, &corpus, &path)?;
    let (model, _) = build_models(cfg, &corpus, &cfg.regime)?;
    if model.config() != ck.header.model {
        return Err(Error::Checkpoint("checkpoint model configuration does not match".into()));
    }
    let mut best = ParamSet::new();
    for (k, t) in ck.tensors.iter().filter(|(k, _)| k.starts_with(REL_PREFIX)) {
        best.insert(k.clone(), t.clone());
    }
    let k = pool_k.unwrap_or(cfg.pool_k);
    if k == 0 {
        return Err(Error::Config("pool_k must be at least 1".into()));
    }
    let set = match split {
        SplitName::Dev => build_eval_set(&corpus, cfg.regime.kind, &cfg.regime.train_domains, split, k)?,
        _ => build_eval_set(&corpus, cfg.regime.kind, std::slice::from_ref(&cfg.regime.target_domain), split, k)?,
    };
    let report = evaluate(&model, &best, &corpus, &set)?;
    let name = serde_json::to_value(split)?.as_str().unwrap_or("test").to_string();
    let json_path = cfg.output_dir.join(format!("eval_{name}.json"));
    let txt_path = cfg.output_dir.join(format!("eval_{name}.txt"));
    write_json(&json_path, &report)?;
    let summary = format!(
        "split {name}  P@1 {:.4}  MRR {:.4}  queries {}  excluded {}\n",
        report.p_at_1, report.mrr, report.n_queries, report.n_excluded
    );
    write_file(&txt_path, summary.as_bytes())?;
    let mut files = vec![json_path, txt_path];

    let comparison = match compare {
        None => None,
        Some(base_path) => {
            let text = fs::read_to_string(base_path).map_err(|e| Error::io(format!("reading {}", base_path.display()), e))?;
            let baseline: MetricsReport = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", base_path.display())))?;
            let labels = RowLabels {
                source: source_label(&cfg.regime),
                target: cfg.regime.target_domain.clone(),
                model: model_label(cfg),
                variant: format!("lambda={}", cfg.train.lambda),
            };
            let row = emit_report(&baseline, &report, labels)?;
            let (j, t) = (cfg.output_dir.join(COMPARISON_JSON), cfg.output_dir.join(COMPARISON_TXT));
            write_json(&j, &row)?;
            write_file(&t, render_table(std::slice::from_ref(&row), BASELINE_VARIANT).as_bytes())?;
            files.extend([j, t]);
            Some(row)
        }
    };
    Ok(EvalOutput { report, comparison, files })
}

/// Worker threads for experiment cells: `ADVRANK_THREADS` if set.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ADVRANK_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("ADVRANK_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::Config("ADVRANK_THREADS must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ComparisonRow>,
    pub json: PathBuf,
    pub text: PathBuf,
}

/// For every target domain, trains λ = 0 and λ = `train.lambda` on the
/// remaining domains and compares them on the target's test split.
pub fn cmd_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.train.lambda <= 0.0 {
        return Err(Error::Config("experiment needs train.lambda > 0 for the adversarial variant".into()));
    }
    let corpus = prepare_corpus(cfg)?;
    let domains = corpus.domains(cfg.regime.kind);
    let targets = if cfg.targets.is_empty() { domains.clone() } else { cfg.targets.clone() };
    if domains.len() < 2 {
        return Err(Error::Data("experiment needs at least two domains".into()));
    }
    let mut cells = Vec::new();
    for t in &targets {
        if !domains.contains(t) {
            return Err(Error::Config(format!("target {t:?} not found in the dataset")));
        }
        let regime = RegimeSpec {
            kind: cfg.regime.kind,
            train_domains: domains.iter().filter(|d| *d != t).cloned().collect(),
            target_domain: t.clone(),
            equal_sampling: cfg.regime.equal_sampling,
            feed_target_to_disc: cfg.regime.feed_target_to_disc,
        };
        for (variant, lambda) in [(BASELINE_VARIANT, 0.0), (ADV_VARIANT, cfg.train.lambda)] {
            cells.push((regime.clone(), variant, lambda));
        }
    }
    let run = |(regime, variant, lambda): &(RegimeSpec, &str, f64)| -> Result<MetricsReport> {
        let wrap = |e: Error| Error::Cell { target: regime.target_domain.clone(), source: Box::new(e) };
        let mut train = cfg.train.clone();
        train.lambda = *lambda;
        let seed = derive_seed(cfg.seed, &format!("cell.{}", regime.target_domain));
        let cell: TrainedCell = train_cell(cfg, &corpus, regime, &train, seed, None, &mut |_| Ok(())).map_err(wrap)?;
        let log = cfg.output_dir.join("cells").join(format!("{}.{variant}.jsonl", regime.target_domain));
        write_log(&log, &cell.fit.log)?;
        evaluate_target(cfg, &corpus, regime, &cell).map_err(wrap)
    };
    let reports: Vec<Result<MetricsReport>> = thread_pool()?.install(|| cells.par_iter().map(run).collect());
    let mut rows = Vec::new();
    for (pair, cell_pair) in reports.chunks(2).zip(cells.chunks(2)) {
        let regime = &cell_pair[0].0;
        let base = pair[0].as_ref().map_err(clone_err)?;
        let adv = pair[1].as_ref().map_err(clone_err)?;
        let labels = |variant: &str| RowLabels {
            source: source_label(regime),
            target: regime.target_domain.clone(),
            model: model_label(cfg),
            variant: variant.to_string(),
        };
        rows.push(emit_report(base, base, labels(BASELINE_VARIANT))?);
        rows.push(emit_report(base, adv, labels(ADV_VARIANT))?);
    }
    let json = cfg.output_dir.join(EXPERIMENT_JSON);
    let text = cfg.output_dir.join(EXPERIMENT_TXT);
    write_json(&json, &rows)?;
    write_file(&text, render_table(&rows, BASELINE_VARIANT).as_bytes())?;
    Ok(ExperimentOutput { rows, json, text })
}

/// Errors are not `Clone`; re-create the first failure for the caller.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::Cell { target, source } => Error::Cell { target: target.clone(), source: Box::new(clone_err(source)) },
        Error::Config(m) => Error::Config(m.clone()),
        Error::Data(m) => Error::Data(m.clone()),
        Error::Input(m) => Error::Input(m.clone()),
        Error::Checkpoint(m) => Error::Checkpoint(m.clone()),
        Error::NonFinite(m) => Error::NonFinite(m.clone()),
        Error::NonScalarLoss(s) => Error::NonScalarLoss(s.clone()),
        Error::Shape { op, shapes } => Error::Shape { op, shapes: shapes.clone() },
        other => Error::Data(other.to_string()),
    }
}
