use candle_core::{DType, Device, Tensor, D};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::training::Adam;

/// Convolutional sentence classifier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextCnnConfig {
    pub emb_dim: usize,
    pub filters: usize,
    pub widths: Vec<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of the training data held out to measure accuracy.
    pub heldout_fraction: f64,
}

impl Default for TextCnnConfig {
    fn default() -> Self {
        Self {
            emb_dim: 100,
            filters: 100,
            widths: vec![3, 4, 5],
            dropout: 0.5,
            epochs: 5,
            batch_size: 50,
            lr: 1e-3,
            heldout_fraction: 0.1,
        }
    }
}

/// A trained classifier with its own vocabulary and class names.
#[derive(Debug, Clone)]
pub struct TextCnn {
    pub config: TextCnnConfig,
    pub vocab: Vocabulary,
    pub classes: Vec<String>,
    params: ParamStore,
    /// Accuracy on the held-out part of the training data.
    pub heldout_accuracy: f64,
}

impl TextCnn {
    fn init(config: &TextCnnConfig, vocab: Vocabulary, classes: Vec<String>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut params = ParamStore::new(DType::F32);
        let u = |rng: &mut ChaCha8Rng, n: usize, s: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-s..s)).collect() };
        let (e, f) = (config.emb_dim, config.filters);
        params.insert("emb", &[vocab.len(), e], u(rng, vocab.len() * e, 0.1))?;
        for &w in &config.widths {
            let fan_in = (e * w) as f64;
            params.insert(&format!("conv{w}.w"), &[w * e, f], u(rng, f * e * w, 1.0 / fan_in.sqrt()))?;
            params.insert(&format!("conv{w}.b"), &[f], vec![0.0; f])?;
        }
        let feat = f * config.widths.len();
        params.insert("fc.w", &[feat, classes.len()], u(rng, feat * classes.len(), 1.0 / (feat as f64).sqrt()))?;
        params.insert("fc.b", &[classes.len()], vec![0.0; classes.len()])?;
        Ok(Self {
            config: config.clone(),
            vocab,
            classes,
            params,
            heldout_accuracy: 0.0,
        })
    }

    fn ids(&self, sentences: &[&[String]]) -> Result<Tensor> {
        let min = self.config.widths.iter().copied().max().unwrap_or(1);
        let len = sentences.iter().map(|s| s.len()).max().unwrap_or(0).max(min);
        let rows: Vec<u32> = sentences
            .iter()
            .flat_map(|s| {
                let mut r: Vec<u32> = s.iter().map(|t| self.vocab.id(t)).collect();
                r.resize(len, PAD);
                r
            })
            .collect();
        Ok(Tensor::from_vec(rows, (sentences.len(), len), &Device::Cpu)?)
    }

    /// Class logits; `dropout` carries the rng when training.
    fn logits(&self, ids: &Tensor, dropout: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let (b, l) = ids.dims2()?;
        let p = |n: &str| self.params.var(n).map(|v| v.as_tensor().clone());
        let x = p("emb")?
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, l, self.config.emb_dim))?;
        let mut feats = Vec::new();
        for &w in &self.config.widths {
            let windows: Vec<Tensor> = (0..w).map(|j| x.narrow(1, j, l - w + 1)).collect::<candle_core::Result<_>>()?;
            let c = Tensor::cat(&windows, 2)?
                .broadcast_matmul(&p(&format!("conv{w}.w"))?)?
                .broadcast_add(&p(&format!("conv{w}.b"))?)?
                .relu()?;
            feats.push(c.max(1)?);
        }
        let mut h = Tensor::cat(&feats, 1)?;
        if let Some(rng) = dropout {
            h = dropout_mask(&h, self.config.dropout, rng)?;
        }
        Ok(h.matmul(&p("fc.w")?)?.broadcast_add(&p("fc.b")?)?)
    }

    /// Predicted class index per sentence.
    pub fn predict(&self, sentences: &[&[String]]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(sentences.len());
        for chunk in sentences.chunks(256) {
            let logits = self.logits(&self.ids(chunk)?, None)?.detach();
            out.extend(logits.argmax(D::Minus1)?.to_vec1::<u32>()?.into_iter().map(|i| i as usize));
        }
        Ok(out)
    }

    /// Trains on `(tokens, class index)` pairs; a fraction is held out to
    /// report accuracy.
    pub fn train(
        data: &[(Vec<String>, usize)],
        classes: Vec<String>,
        config: &TextCnnConfig,
        seed: u64,
    ) -> Result<Self> {
        let distinct: std::collections::BTreeSet<usize> = data.iter().map(|d| d.1).collect();
        if distinct.len() < 2 {
            return Err(Error::InsufficientData("classifier needs at least two classes in the data".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let n_held = ((data.len() as f64) * config.heldout_fraction).round() as usize;
        let (held, train) = order.split_at(n_held.min(data.len().saturating_sub(1)));
        let train_tokens: Vec<Vec<String>> = train.iter().map(|&i| data[i].0.clone()).collect();
        let vocab = Vocabulary::build(&train_tokens, 1)?;
        let mut model = Self::init(config, vocab, classes, &mut rng)?;
        let group: Vec<_> = model.params.group(&[""]);
        let mut adam = Adam::new(config.lr, Some(5.0));
        let mut train_idx = train.to_vec();
        for _ in 0..config.epochs {
            train_idx.shuffle(&mut rng);
            for chunk in train_idx.chunks(config.batch_size.max(1)) {
                let toks: Vec<&[String]> = chunk.iter().map(|&i| data[i].0.as_slice()).collect();
                let y: Vec<u32> = chunk.iter().map(|&i| data[i].1 as u32).collect();
                let logits = model.logits(&model.ids(&toks)?, Some(&mut rng))?;
                let loss = cross_entropy(&logits, &y)?;
                let grads = loss.backward()?;
                adam.step(&group, &grads)?;
            }
        }
        if !held.is_empty() {
            let toks: Vec<&[String]> = held.iter().map(|&i| data[i].0.as_slice()).collect();
            let pred = model.predict(&toks)?;
            let hits = pred.iter().zip(held).filter(|(p, &i)| **p == data[i].1).count();
            model.heldout_accuracy = hits as f64 / held.len() as f64;
        }
        Ok(model)
    }
}

/// Mean cross-entropy of `[B, C]` logits against class indices.
pub(crate) fn cross_entropy(logits: &Tensor, y: &[u32]) -> Result<Tensor> {
    let logp = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    let idx = Tensor::from_vec(y.to_vec(), (y.len(), 1), &Device::Cpu)?;
    Ok(logp.gather(&idx, 1)?.neg()?.mean_all()?)
}

/// Inverted dropout with a mask drawn from `rng`.
pub(crate) fn dropout_mask(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let n = x.elem_count();
    let mask: Vec<f32> = (0..n)
        .map(|_| if rng.random::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
        .collect();
    let m = Tensor::from_vec(mask, x.dims(), &Device::Cpu)?.to_dtype(x.dtype())?;
    Ok((x * m)?)
}

/// Fraction of `pred` equal to `truth`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_corpus, AttributeSchema};

    #[test]
    fn learns_toy_sentiment() {
        let corpus = generate_toy_corpus(1500, &AttributeSchema::toy(), 2).unwrap();
        let data: Vec<(Vec<String>, usize)> = corpus.sentences.iter().map(|s| (s.tokens.clone(), s.labels[0])).collect();
        let cfg = TextCnnConfig { emb_dim: 32, filters: 16, epochs: 4, ..TextCnnConfig::default() };
        let m = TextCnn::train(&data, vec!["positive".into(), "negative".into()], &cfg, 0).unwrap();
        assert!(m.heldout_accuracy >= 0.95, "{}", m.heldout_accuracy);
    }

    #[test]
    fn single_class_is_an_error() {
        let data = vec![(vec!["a".to_string()], 0usize); 10];
        assert!(TextCnn::train(&data, vec!["x".into(), "y".into()], &TextCnnConfig::default(), 0).is_err());
    }

    #[test]
    fn dropout_only_scales_kept_units() {
        let x = Tensor::ones((1, 1000), DType::F32, &Device::Cpu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y: Vec<f32> = dropout_mask(&x, 0.5, &mut rng).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(y.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
