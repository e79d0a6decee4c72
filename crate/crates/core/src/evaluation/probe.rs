use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multinomial logistic regression trained by full-batch gradient descent
/// on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticProbe {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `[classes][features + 1]`, bias last.
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub test_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.5,
            l2: 1e-4,
            test_fraction: 0.2,
        }
    }
}

fn softmax(logits: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - m).exp();
        s += *l;
    }
    logits.iter_mut().for_each(|l| *l /= s);
}

impl LogisticProbe {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::InvalidInput("probe needs one label per feature row".into()));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-12 { v.sqrt() } else { 1.0 }
            })
            .collect();
        let mut probe = Self {
            mean,
            scale,
            weights: vec![vec![0.0; d + 1]; classes],
        };
        let xs: Vec<Vec<f64>> = x.iter().map(|r| probe.standardize(r)).collect();
        for _ in 0..cfg.epochs {
            let mut grad = vec![vec![0.0; d + 1]; classes];
            for (r, &c) in xs.iter().zip(y) {
                let mut p = probe.logits_std(r);
                softmax(&mut p);
                for (k, g) in grad.iter_mut().enumerate() {
                    let e = p[k] - if k == c { 1.0 } else { 0.0 };
                    for j in 0..d {
                        g[j] += e * r[j];
                    }
                    g[d] += e;
                }
            }
            for (w, g) in probe.weights.iter_mut().zip(&grad) {
                for j in 0..=d {
                    let reg = if j < d { cfg.l2 * w[j] } else { 0.0 };
                    w[j] -= cfg.lr * (g[j] / n + reg);
                }
            }
        }
        Ok(probe)
    }

    fn standardize(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    fn logits_std(&self, r: &[f64]) -> Vec<f64> {
        let d = r.len();
        self.weights
            .iter()
            .map(|w| w[..d].iter().zip(r).map(|(a, b)| a * b).sum::<f64>() + w[d])
            .collect()
    }

    pub fn predict(&self, r: &[f64]) -> usize {
        let l = self.logits_std(&self.standardize(r));
        (0..l.len()).max_by(|&a, &b| l[a].total_cmp(&l[b])).unwrap_or(0)
    }
}

/// Held-out accuracy of a probe trained on a seeded split of `(x, y)`,
/// alongside the majority-class rate on the same held-out rows.
pub fn probe_accuracy(x: &[Vec<f64>], y: &[usize], classes: usize, cfg: &ProbeConfig, seed: u64) -> Result<(f64, f64)> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((x.len() as f64) * cfg.test_fraction).round() as usize;
    if n_test == 0 || n_test >= x.len() {
        return Err(Error::InsufficientData("too few rows to split for the probe".into()));
    }
    let (test, train) = order.split_at(n_test);
    let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
    let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let probe = LogisticProbe::fit(&tx, &ty, classes, cfg)?;
    let hits = test.iter().filter(|&&i| probe.predict(&x[i]) == y[i]).count();
    let mut counts = vec![0usize; classes];
    for &i in test {
        counts[y[i]] += 1;
    }
    let majority = counts.iter().copied().max().unwrap_or(0);
    Ok((hits as f64 / n_test as f64, majority as f64 / n_test as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn one_hot_codes_are_recovered() {
        let y: Vec<usize> = (0..200).map(|i| i % 3).collect();
        let x: Vec<Vec<f64>> = y.iter().map(|&c| (0..3).map(|k| (k == c) as u8 as f64).collect()).collect();
        let (acc, _) = probe_accuracy(&x, &y, 3, &ProbeConfig::default(), 0).unwrap();
        assert!(acc > 0.99, "{acc}");
    }

    #[test]
    fn independent_codes_sit_near_majority() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<usize> = (0..1000).map(|_| (rng.random::<f64>() < 0.7) as usize).collect();
        let x: Vec<Vec<f64>> = (0..1000).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let (acc, majority) = probe_accuracy(&x, &y, 2, &ProbeConfig::default(), 0).unwrap();
        assert!((acc - majority).abs() < 0.06, "{acc} vs {majority}");
    }

    #[test]
    fn tiny_input_is_an_error() {
        assert!(probe_accuracy(&[vec![0.0]], &[0], 2, &ProbeConfig::default(), 0).is_err());
    }
}
