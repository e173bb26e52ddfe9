//! Adam with bias correction and per-parameter step counts.

use std::collections::BTreeMap;

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    pub(crate) m: BTreeMap<String, Tensor>,
    pub(crate) v: BTreeMap<String, Tensor>,
    pub(crate) steps: BTreeMap<String, u64>,
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps(&self, name: &str) -> u64 {
        self.steps.get(name).copied().unwrap_or(0)
    }

    /// Applies one step to every parameter named in `grads`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn update(&mut self, params: &mut ParamSet, grads: &BTreeMap<String, Tensor>, lr: f64) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            match params.get(name) {
                Some(p) if p.shape() == g.shape() => {}
                _ => return Err(Error::Input(format!("gradient for unknown or mismatched parameter {name}"))),
            }
        }
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let t = self.steps.entry(name.clone()).or_insert(0);
            *t += 1;
            let c1 = 1.0 - BETA1.powi(*t as i32);
            let c2 = 1.0 - BETA2.powi(*t as i32);
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPSILON);
            }
        }
        Ok(())
    }

    /// Moments as named tensors (`adam.m.<param>`, `adam.v.<param>`) plus
    /// step counts, for checkpointing.
    pub fn export(&self) -> (ParamSet, BTreeMap<String, u64>) {
        let mut out = ParamSet::new();
        for (k, t) in &self.m {
            out.insert(format!("adam.m.{k}"), t.clone());
        }
        for (k, t) in &self.v {
            out.insert(format!("adam.v.{k}"), t.clone());
        }
        (out, self.steps.clone())
    }

    pub fn import(tensors: &ParamSet, steps: BTreeMap<String, u64>) -> Result<Adam> {
        let mut adam = Adam { steps, ..Adam::default() };
        for (k, t) in tensors.iter() {
            if let Some(name) = k.strip_prefix("adam.m.") {
                adam.m.insert(name.to_string(), t.clone());
            } else if let Some(name) = k.strip_prefix("adam.v.") {
                adam.v.insert(name.to_string(), t.clone());
            }
        }
        for name in adam.steps.keys() {
            if !adam.m.contains_key(name) || !adam.v.contains_key(name) {
                return Err(Error::Checkpoint(format!("optimizer state for {name} is incomplete")));
            }
        }
        Ok(adam)
    }
}
