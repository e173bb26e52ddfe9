//! One training run (a "cell" of the experiment matrix) and its evaluation.

use crate::autodiff::{Graph, ParamSet};
use crate::data::{sample_triples, Corpus, Label, RegimeSpec, SplitName};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::models::{bind_prefix, Discriminator, DiscriminatorConfig, Model, REL_PREFIX};
use crate::rng::derive_seed;
use crate::training::{fit, DevMetrics, FitState, TrainConfig, TrainState};

use super::prepare::{build_eval_set, evaluate, EvalSet};
use super::ExperimentConfig;

/// Ranking model and discriminator sized for `corpus` and `regime`.
pub fn build_models(cfg: &ExperimentConfig, corpus: &Corpus, regime: &RegimeSpec) -> Result<(Model, Discriminator)> {
    let model = Model::new(&cfg.model_config(corpus.vocab.len()), &corpus.vocab)?;
    let inspected = cfg.discriminator.inspected_reps.clone().unwrap_or_else(|| model.default_inspected_reps());
    let disc_cfg = DiscriminatorConfig {
        num_domains: regime.num_domains().max(2),
        hidden_widths: cfg.discriminator.hidden_widths.clone(),
        inspected_reps: inspected,
    };
    let disc = Discriminator::new(disc_cfg, &model.rep_dims())?;
    Ok((model, disc))
}

pub struct TrainedCell {
    pub model: Model,
    pub disc: Discriminator,
    pub fit: FitState,
}

impl TrainedCell {
    /// Parameters of the best dev epoch.
    pub fn best_params(&self) -> &ParamSet {
        &self.fit.best.params
    }
}

fn check_domains(corpus: &Corpus, regime: &RegimeSpec) -> Result<()> {
    let known = corpus.domains(regime.kind);
    for d in regime.train_domains.iter().chain([&regime.target_domain]) {
        if !known.contains(d) {
            return Err(Error::Config(format!("domain {d:?} not found in the dataset (have {known:?})")));
        }
    }
    Ok(())
}

/// Dev pools over the training domains.
pub fn dev_set(cfg: &ExperimentConfig, corpus: &Corpus, regime: &RegimeSpec) -> Result<EvalSet> {
    let set = build_eval_set(corpus, regime.kind, &regime.train_domains, SplitName::Dev, cfg.pool_k)?;
    if set.judgeable() == 0 {
        return Err(Error::Data("dev split has no judgeable queries".into()));
    }
    Ok(set)
}

/// Trains one model under `regime` and `train`, starting fresh or from
/// `resume`. All randomness derives from `seed`.
pub fn train_cell(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    regime: &RegimeSpec,
    train: &TrainConfig,
    seed: u64,
    resume: Option<FitState>,
    on_epoch: &mut dyn FnMut(&FitState) -> Result<()>,
) -> Result<TrainedCell> {
    regime.validate()?;
    check_domains(corpus, regime)?;
    let (model, disc) = build_models(cfg, corpus, regime)?;
    let dev = dev_set(cfg, corpus, regime)?;
    let state = match resume {
        Some(s) => s,
        None => FitState::new(TrainState::new(&model, &disc, derive_seed(seed, "init"))?, train.patience),
    };
    let fit_state = fit(
        &model,
        &disc,
        state,
        train,
        |epoch| sample_triples(corpus, regime, derive_seed(seed, &format!("sample.{epoch}"))),
        |params| {
            let m = evaluate(&model, params, corpus, &dev)?;
            Ok(DevMetrics { p1: m.p_at_1, mrr: m.mrr })
        },
        on_epoch,
    )?;
    Ok(TrainedCell { model, disc, fit: fit_state })
}

/// Held-out metrics on the target domain's test split.
pub fn evaluate_target(cfg: &ExperimentConfig, corpus: &Corpus, regime: &RegimeSpec, cell: &TrainedCell) -> Result<MetricsReport> {
    let set = build_eval_set(corpus, regime.kind, std::slice::from_ref(&regime.target_domain), SplitName::Test, cfg.pool_k)?;
    evaluate(&cell.model, cell.best_params(), corpus, &set)
}

/// `"joint"` representations of (query, first relevant answer) for the given
/// queries, computed with frozen parameters.
pub fn joint_features(model: &Model, params: &ParamSet, corpus: &Corpus, queries: &[usize]) -> Result<Vec<Vec<f64>>> {
    queries
        .iter()
        .map(|&qi| {
            let q = &corpus.queries[qi];
            let a = q
                .judgments
                .iter()
                .find(|(_, l)| *l == Label::Relevant)
                .map(|(a, _)| *a)
                .ok_or_else(|| Error::Data(format!("query {} has no relevant answer", q.qid)))?;
            let mut g = Graph::new();
            let bound = bind_prefix(params, &mut g, REL_PREFIX);
            let out = model.score(&mut g, &bound, &q.tokens, &corpus.answers[a].tokens)?;
            Ok(g.value(out.reps["joint"]).data().to_vec())
        })
        .collect()
}
