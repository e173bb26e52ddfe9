//! Linear probe: how well can the domain be read off frozen features?

use rand::seq::SliceRandom;

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeResult {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

const EPOCHS: usize = 300;
const LEARNING_RATE: f64 = 0.5;

/// Trains softmax regression on a random half of `(features, labels)` with
/// full-batch gradient descent on standardized features and reports
/// accuracy on both halves.
pub fn domain_probe(features: &[Vec<f64>], labels: &[usize], num_classes: usize, seed: u64) -> Result<ProbeResult> {
    if features.len() != labels.len() || features.len() < 4 {
        return Err(Error::Input("probe needs at least 4 labeled feature vectors".into()));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) || labels.iter().any(|&l| l >= num_classes) {
        return Err(Error::Input("probe features must share a length and labels must be in range".into()));
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng::rng(seed));
    let (train, test) = order.split_at(features.len() / 2);

    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    for &i in train {
        for (m, x) in mean.iter_mut().zip(&features[i]) {
            *m += x / train.len() as f64;
        }
    }
    for &i in train {
        for ((s, x), m) in sd.iter_mut().zip(&features[i]).zip(&mean) {
            *s += (x - m).powi(2) / train.len() as f64;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-8)).collect();
    let norm = |i: usize| -> Vec<f64> { features[i].iter().zip(&mean).zip(&sd).map(|((x, m), s)| (x - m) / s).collect() };
    let xs: Vec<Vec<f64>> = (0..features.len()).map(norm).collect();

    let mut w = vec![vec![0.0; dim]; num_classes];
    let mut b = vec![0.0; num_classes];
    let logits = |w: &[Vec<f64>], b: &[f64], x: &[f64]| -> Vec<f64> {
        w.iter().zip(b).map(|(row, bias)| bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()).collect()
    };
    for _ in 0..EPOCHS {
        let mut gw = vec![vec![0.0; dim]; num_classes];
        let mut gb = vec![0.0; num_classes];
        for &i in train {
            let p = softmax(&logits(&w, &b, &xs[i]));
            for k in 0..num_classes {
                let err = p[k] - if k == labels[i] { 1.0 } else { 0.0 };
                gb[k] += err;
                for (g, x) in gw[k].iter_mut().zip(&xs[i]) {
                    *g += err * x;
                }
            }
        }
        let scale = LEARNING_RATE / train.len() as f64;
        for k in 0..num_classes {
            b[k] -= scale * gb[k];
            for (wv, g) in w[k].iter_mut().zip(&gw[k]) {
                *wv -= scale * g;
            }
        }
    }
    let accuracy = |idx: &[usize]| -> f64 {
        let hits = idx
            .iter()
            .filter(|&&i| {
                let z = logits(&w, &b, &xs[i]);
                let best = (0..num_classes).max_by(|&a, &c| z[a].total_cmp(&z[c]).then(c.cmp(&a))).expect("classes");
                best == labels[i]
            })
            .count();
        hits as f64 / idx.len() as f64
    };
    Ok(ProbeResult { train_accuracy: accuracy(train), test_accuracy: accuracy(test) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn data(separation: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::rng(4);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..600 {
            let y = i % 3;
            let mut x: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
            x[y] += separation;
            xs.push(x);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn separable_features_are_recovered() {
        let (xs, ys) = data(3.0);
        assert!(domain_probe(&xs, &ys, 3, 1).unwrap().test_accuracy > 0.95);
    }

    #[test]
    fn noise_features_stay_near_chance() {
        let (xs, ys) = data(0.0);
        let acc = domain_probe(&xs, &ys, 3, 1).unwrap().test_accuracy;
        assert!((acc - 1.0 / 3.0).abs() < 0.1, "{acc}");
    }

    #[test]
    fn bad_inputs() {
        assert!(domain_probe(&vec![vec![1.0]; 3], &[0, 1, 0], 2, 0).is_err());
        assert!(domain_probe(&vec![vec![1.0]; 4], &[0, 1, 0, 2], 2, 0).is_err());
    }
}
