use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Vocabulary, PAD, UNK};
use crate::error::{Error, Result};
use crate::evaluation::accuracy;
use crate::model::cells::{Cell, CellState};
use crate::model::params::{orthogonal_blocks, uniform};
use crate::model::{CellType, ParamStore};
use crate::training::Adam;

/// Bidirectional LSTM sentence classifier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    /// Drop probability on the pooled features during training.
    pub dropout: f64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            emb_dim: 300,
            hidden_dim: 256,
            dropout: 0.8,
            patience: 8,
            max_epochs: 100,
            batch_size: 32,
            lr: 1e-3,
        }
    }
}

impl DownstreamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| Err(Error::config(&format!("augment.downstream.{k}"), m));
        if self.patience < 1 {
            return bad("patience", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", "must lie in [0, 1)");
        }
        if self.emb_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("emb_dim", "sizes and epoch counts must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        Ok(())
    }
}

/// A labeled sentence for the downstream task.
pub type Example = (Vec<String>, usize);

struct BiLstm {
    vocab: Vocabulary,
    params: ParamStore,
    hidden: usize,
    emb_dim: usize,
}

impl BiLstm {
    fn new(vocab: Vocabulary, classes: usize, cfg: &DownstreamConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (e, h) = (cfg.emb_dim, cfg.hidden_dim);
        let mut params = ParamStore::new(DType::F32);
        params.insert("emb", &[vocab.len(), e], uniform(rng, vocab.len() * e, 0.1))?;
        let s = 1.0 / (h as f64).sqrt();
        for dir in ["fwd", "bwd"] {
            params.insert(&format!("{dir}.w_ih"), &[e, 4 * h], uniform(rng, e * 4 * h, s))?;
            params.insert(&format!("{dir}.w_hh"), &[h, 4 * h], orthogonal_blocks(rng, h, 4 * h))?;
            params.insert(&format!("{dir}.b_ih"), &[4 * h], vec![0.0; 4 * h])?;
            params.insert(&format!("{dir}.b_hh"), &[4 * h], vec![0.0; 4 * h])?;
        }
        params.insert("out.w", &[2 * h, classes], uniform(rng, 2 * h * classes, 1.0 / (2.0 * h as f64).sqrt()))?;
        params.insert("out.b", &[classes], vec![0.0; classes])?;
        Ok(Self {
            vocab,
            params,
            hidden: h,
            emb_dim: e,
        })
    }

    fn p(&self, name: &str) -> Result<Tensor> {
        Ok(self.params.var(name)?.as_tensor().clone())
    }

    fn cell(&self, dir: &str) -> Result<Cell> {
        Ok(Cell {
            kind: CellType::Lstm,
            w_ih: self.p(&format!("{dir}.w_ih"))?,
            w_hh: self.p(&format!("{dir}.w_hh"))?,
            b_ih: self.p(&format!("{dir}.b_ih"))?,
            b_hh: self.p(&format!("{dir}.b_hh"))?,
            hidden: self.hidden,
        })
    }

    fn inputs(&self, batch: &[&Example]) -> Result<(Tensor, Tensor)> {
        let len = batch.iter().map(|e| e.0.len()).max().unwrap_or(0).max(1);
        let mut ids = Vec::with_capacity(batch.len() * len);
        let mut mask = Vec::with_capacity(batch.len() * len);
        for (tokens, _) in batch {
            let row: Vec<u32> = if tokens.is_empty() {
                vec![UNK]
            } else {
                tokens.iter().map(|t| self.vocab.id(t)).collect()
            };
            for i in 0..len {
                ids.push(row.get(i).copied().unwrap_or(PAD));
                mask.push((i < row.len()) as u8 as f32);
            }
        }
        let dev = &Device::Cpu;
        Ok((
            Tensor::from_vec(ids, (batch.len(), len), dev)?,
            Tensor::from_vec(mask, (batch.len(), len), dev)?,
        ))
    }

    fn logits(&self, batch: &[&Example], dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<Tensor> {
        let (ids, mask) = self.inputs(batch)?;
        let (b, l) = ids.dims2()?;
        let x = self.p("emb")?.index_select(&ids.flatten_all()?, 0)?.reshape((b, l, self.emb_dim))?;
        let mut finals = Vec::with_capacity(2);
        for (dir, reverse) in [("fwd", false), ("bwd", true)] {
            let cell = self.cell(dir)?;
            let xw = cell.project(&x)?;
            let mut state = CellState::new(CellType::Lstm, Tensor::zeros((b, self.hidden), DType::F32, &Device::Cpu)?)?;
            for s in 0..l {
                let t = if reverse { l - 1 - s } else { s };
                let next = cell.step(&xw.narrow(1, t, 1)?.squeeze(1)?, &state)?;
                state = state.masked(next, &mask.narrow(1, t, 1)?)?;
            }
            finals.push(state.h().clone());
        }
        let mut feats = Tensor::cat(&finals, 1)?;
        if let Some((p, rng)) = dropout {
            feats = crate::evaluation::dropout_mask(&feats, p, rng)?;
        }
        Ok(feats.matmul(&self.p("out.w")?)?.broadcast_add(&self.p("out.b")?)?)
    }

    fn loss(&self, data: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in data.chunks(256) {
            let refs: Vec<&Example> = chunk.iter().collect();
            let y: Vec<u32> = chunk.iter().map(|e| e.1 as u32).collect();
            let l = crate::evaluation::cross_entropy(&self.logits(&refs, None)?, &y)?;
            total += l.to_scalar::<f32>()? as f64 * chunk.len() as f64;
        }
        Ok(total / data.len().max(1) as f64)
    }

    fn predict(&self, data: &[Example]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(data.len());
        for chunk in data.chunks(256) {
            let refs: Vec<&Example> = chunk.iter().collect();
            let pred = self.logits(&refs, None)?.argmax(1)?.to_vec1::<u32>()?;
            out.extend(pred.into_iter().map(|c| c as usize));
        }
        Ok(out)
    }

    fn restore(&self, snapshot: &ParamStore) -> Result<()> {
        for (name, var) in self.params.iter() {
            var.set(snapshot.var(name)?.as_tensor())?;
        }
        Ok(())
    }
}

/// Outcome of one downstream run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub test_accuracy: f64,
    pub epochs: usize,
    pub best_val_loss: f64,
    pub retried: bool,
}

fn fit_once(
    train: &[Example],
    valid: &[Example],
    test: &[Example],
    classes: usize,
    cfg: &DownstreamConfig,
    seed: u64,
) -> Result<DownstreamResult> {
    let tokens: Vec<Vec<String>> = train.iter().map(|e| e.0.clone()).collect();
    let vocab = Vocabulary::build(&tokens, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = BiLstm::new(vocab, classes, cfg, &mut rng)?;
    let group = model.params.group(&[""]);
    let mut adam = Adam::new(cfg.lr, Some(5.0));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, model.params.deep_clone()?);
    let (mut since, mut epochs) = (0, 0);
    while epochs < cfg.max_epochs && since < cfg.patience {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let y: Vec<u32> = refs.iter().map(|e| e.1 as u32).collect();
            let loss = crate::evaluation::cross_entropy(&model.logits(&refs, Some((cfg.dropout, &mut rng)))?, &y)?;
            let v = loss.to_scalar::<f32>()?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("downstream loss {v}")));
            }
            adam.step(&group, &loss.backward()?)?;
        }
        epochs += 1;
        let val = model.loss(if valid.is_empty() { train } else { valid })?;
        if !val.is_finite() {
            return Err(Error::NonFinite(format!("downstream validation loss {val}")));
        }
        if val < best.0 {
            best = (val, model.params.deep_clone()?);
            since = 0;
        } else {
            since += 1;
        }
    }
    model.restore(&best.1)?;
    let pred = model.predict(test)?;
    let truth: Vec<usize> = test.iter().map(|e| e.1).collect();
    Ok(DownstreamResult {
        test_accuracy: accuracy(&pred, &truth),
        epochs,
        best_val_loss: best.0,
        retried: false,
    })
}

/// Trains with early stopping on `valid` and reports accuracy on `test`.
/// A diverging run is retried once at half the learning rate.
pub fn train_downstream(
    train: &[Example],
    valid: &[Example],
    test: &[Example],
    classes: usize,
    cfg: &DownstreamConfig,
    seed: u64,
) -> Result<DownstreamResult> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("downstream task needs training and test data".into()));
    }
    match fit_once(train, valid, test, classes, cfg, seed) {
        Err(Error::NonFinite(_)) => {
            let half = DownstreamConfig { lr: cfg.lr / 2.0, ..cfg.clone() };
            let mut r = fit_once(train, valid, test, classes, &half, seed)?;
            r.retried = true;
            Ok(r)
        }
        other => other,
    }
}
