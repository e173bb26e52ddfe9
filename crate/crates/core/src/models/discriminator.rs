//! Domain discriminator over gradient-reversed model representations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, GradReverseConfig, Graph, NodeId, ParamSet};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub num_domains: usize,
    pub hidden_widths: Vec<usize>,
    pub inspected_reps: Vec<String>,
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_domains < 2 {
            return Err(Error::Config(format!("discriminator needs at least 2 domains, got {}", self.num_domains)));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("discriminator hidden widths must be positive".into()));
        }
        if self.inspected_reps.is_empty() {
            return Err(Error::Config("discriminator must inspect at least one representation".into()));
        }
        Ok(())
    }
}

/// MLP from the concatenated inspected representations to domain logits.
#[derive(Clone, Debug)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    input_dim: usize,
}

impl Discriminator {
    /// `rep_dims` is the host model's representation map.
    pub fn new(cfg: DiscriminatorConfig, rep_dims: &BTreeMap<String, usize>) -> Result<Self> {
        cfg.validate()?;
        let mut input_dim = 0;
        for name in &cfg.inspected_reps {
            input_dim += rep_dims
                .get(name)
                .ok_or_else(|| Error::Config(format!("model has no representation named {name:?}")))?;
        }
        Ok(Discriminator { cfg, input_dim })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.cfg.hidden_widths);
        w.push(self.cfg.num_domains);
        w
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut r = rng::rng(seed);
        let mut p = ParamSet::new();
        for (i, pair) in self.widths().windows(2).enumerate() {
            p.insert_weight(format!("disc.l{i}"), pair[0], pair[1], &mut r);
            p.insert_bias(format!("disc.l{i}_b"), pair[1]);
        }
        p
    }

    /// Logits `z_j`; each inspected representation passes through
    /// `gradient_reverse(·, λ)` before the MLP.
    pub fn discriminate(&self, g: &mut Graph, p: &Bound, reps: &BTreeMap<String, NodeId>, reversal: GradReverseConfig) -> Result<NodeId> {
        let mut parts = Vec::with_capacity(self.cfg.inspected_reps.len());
        for name in &self.cfg.inspected_reps {
            let rep = *reps.get(name).ok_or_else(|| Error::Input(format!("missing representation {name:?}")))?;
            parts.push(g.gradient_reverse(rep, reversal)?);
        }
        let mut x = g.concat(&parts)?;
        let layers = self.widths().len() - 1;
        for i in 0..layers {
            let y = g.matmul(x, p.node(&format!("disc.l{i}"))?)?;
            x = g.add(y, p.node(&format!("disc.l{i}_b"))?)?;
            if i + 1 < layers {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{softmax, Tensor};

    fn setup(hidden: Vec<usize>) -> (Discriminator, ParamSet) {
        let dims: BTreeMap<String, usize> = [("joint".to_string(), 6), ("fc1".to_string(), 2)].into_iter().collect();
        let cfg = DiscriminatorConfig { num_domains: 3, hidden_widths: hidden, inspected_reps: vec!["joint".into(), "fc1".into()] };
        let d = Discriminator::new(cfg, &dims).unwrap();
        let p = d.init_params(3);
        (d, p)
    }

    fn logits(d: &Discriminator, p: &ParamSet, lambda: f64) -> Vec<f64> {
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let joint = g.leaf(Tensor::vector(vec![0.1, -0.3, 0.5, 0.2, 0.9, -0.7]));
        let fc1 = g.leaf(Tensor::vector(vec![1.5, -0.2]));
        let reps = [("joint".to_string(), joint), ("fc1".to_string(), fc1)].into_iter().collect();
        let z = d.discriminate(&mut g, &b, &reps, GradReverseConfig::new(lambda).unwrap()).unwrap();
        g.value(z).data().to_vec()
    }

    #[test]
    fn forward_does_not_depend_on_lambda() {
        let (d, p) = setup(vec![5]);
        let base = logits(&d, &p, 0.0);
        assert_eq!(base.len(), 3);
        assert_eq!(base, logits(&d, &p, 0.25));
        assert_eq!(base, logits(&d, &p, 1.0));
    }

    #[test]
    fn zero_final_layer_gives_uniform_softmax() {
        let (d, mut p) = setup(vec![4, 4]);
        for v in p.get_mut("disc.l2").unwrap().data_mut() {
            *v = 0.0;
        }
        for prob in softmax(&logits(&d, &p, 1.0)) {
            assert!((prob - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unknown_or_missing_representation() {
        let dims: BTreeMap<String, usize> = [("joint".to_string(), 6)].into_iter().collect();
        let cfg = DiscriminatorConfig { num_domains: 2, hidden_widths: vec![], inspected_reps: vec!["fc1".into()] };
        assert!(Discriminator::new(cfg, &dims).is_err());

        let (d, p) = setup(vec![]);
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let joint = g.leaf(Tensor::vector(vec![0.0; 6]));
        let reps = [("joint".to_string(), joint)].into_iter().collect();
        assert!(d.discriminate(&mut g, &b, &reps, GradReverseConfig::new(1.0).unwrap()).is_err());
    }

    #[test]
    fn config_invariants() {
        let cfg = DiscriminatorConfig { num_domains: 1, hidden_widths: vec![], inspected_reps: vec!["joint".into()] };
        assert!(cfg.validate().is_err());
        let cfg = DiscriminatorConfig { num_domains: 2, hidden_widths: vec![], inspected_reps: vec![] };
        assert!(cfg.validate().is_err());
    }
}
