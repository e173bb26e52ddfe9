use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Gradients, Graph, NodeId, Tensor};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Glorot-uniform weight in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn insert_weight(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Tensor::from_parts(vec![fan_in, fan_out], data));
    }

    pub fn insert_bias(&mut self, name: impl Into<String>, len: usize) {
        self.insert(name, Tensor::zeros(&[len]));
    }

    /// Copies every parameter into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let ids = self.entries.iter().map(|(k, t)| (k.clone(), g.leaf(t.clone()))).collect();
        Bound { ids }
    }

    /// Merges `other` into `self`; names must not collide.
    pub fn merge(&mut self, other: ParamSet) -> Result<()> {
        for (k, v) in other.entries {
            if self.entries.contains_key(&k) {
                return Err(Error::Input(format!("duplicate parameter {k}")));
            }
            self.entries.insert(k, v);
        }
        Ok(())
    }
}

/// Graph node ids of a bound [`ParamSet`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    ids: BTreeMap<String, NodeId>,
}

impl Bound {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.ids.get(name).copied().ok_or_else(|| Error::Input(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.ids.iter()
    }

    /// Gradient per parameter name; parameters off the loss path get zeros.
    pub fn collect_grads(&self, g: &Graph, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.ids
            .iter()
            .map(|(k, &id)| {
                let t = grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(id)));
                (k.clone(), t)
            })
            .collect()
    }
}
