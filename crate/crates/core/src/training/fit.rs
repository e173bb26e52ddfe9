//! Epoch loop with early stopping on dev MRR.

use serde::{Deserialize, Serialize};

use crate::data::TripleSample;
use crate::error::{Error, Result};
use crate::models::{Discriminator, Model};

use super::step::{train_step, TrainConfig, TrainState};

/// Stops after `patience` consecutive epochs without strict improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: None, best_epoch: 0, bad_epochs: 0 }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        if self.best.is_none_or(|b| metric > b) {
            self.best = Some(metric);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            return StopDecision::Improved;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_p1: f64,
    pub dev_mrr: f64,
    pub disc_acc: f64,
    pub lambda: f64,
    pub disc_only_triples: usize,
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DevMetrics {
    pub p1: f64,
    pub mrr: f64,
}

/// Everything needed to continue training later.
#[derive(Clone, Debug, PartialEq)]
pub struct FitState {
    pub last: TrainState,
    pub best: TrainState,
    /// Number of completed epochs.
    pub epoch: usize,
    pub stopper: EarlyStopper,
    pub log: Vec<EpochLog>,
    pub stopped: bool,
}

impl FitState {
    pub fn new(initial: TrainState, patience: usize) -> Self {
        FitState { best: initial.clone(), last: initial, epoch: 0, stopper: EarlyStopper::new(patience), log: Vec::new(), stopped: false }
    }

    pub fn best_epoch(&self) -> usize {
        self.stopper.best_epoch
    }
}

/// Trains until early stopping or `max_epochs`, starting from `state`.
///
/// `sample(epoch)` supplies the epoch's triples (epochs count from 1);
/// `dev(params)` evaluates on the dev split; `on_epoch` sees the state after
/// every epoch (for checkpointing).
pub fn fit<S, E, C>(
    model: &Model,
    disc: &Discriminator,
    mut state: FitState,
    cfg: &TrainConfig,
    mut sample: S,
    mut dev: E,
    mut on_epoch: C,
) -> Result<FitState>
where
    S: FnMut(usize) -> Result<TripleSample>,
    E: FnMut(&crate::autodiff::ParamSet) -> Result<DevMetrics>,
    C: FnMut(&FitState) -> Result<()>,
{
    cfg.validate()?;
    while !state.stopped && state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let triples = sample(epoch)?;
        if triples.triples.iter().all(|t| t.discriminator_only) {
            return Err(Error::Data("no labeled training triples".into()));
        }
        let mut loss_sum = 0.0;
        let mut loss_batches = 0usize;
        let (mut correct, mut total) = (0usize, 0usize);
        for batch in triples.triples.chunks(cfg.batch_size) {
            let s = train_step(model, disc, &mut state.last, batch, cfg)?;
            if s.labeled > 0 {
                loss_sum += s.joint_loss;
                loss_batches += 1;
            }
            correct += s.disc_correct;
            total += s.disc_total;
        }
        let m = dev(&state.last.params)?;
        state.log.push(EpochLog {
            epoch,
            train_loss: loss_sum / loss_batches as f64,
            dev_p1: m.p1,
            dev_mrr: m.mrr,
            disc_acc: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            lambda: cfg.lambda,
            disc_only_triples: triples.discriminator_only,
            skipped: triples.skipped,
        });
        state.epoch = epoch;
        match state.stopper.observe(epoch, m.mrr) {
            StopDecision::Improved => state.best = state.last.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => state.stopped = true,
        }
        on_epoch(&state)?;
    }
    Ok(state)
}
