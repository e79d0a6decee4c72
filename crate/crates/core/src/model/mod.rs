//! The CGA networks: recurrent encoder, attribute-conditioned recurrent
//! decoder and a multi-head discriminator over the latent code.

pub(crate) mod cells;
pub(crate) mod params;

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, D};
use candle_nn::ops::log_softmax;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use params::ParamStore;

use crate::corpus::{AttributeVector, LabeledExample, EOS, PAD, SOS};
use crate::error::{Error, Result};
use cells::{Cell, CellState};

const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    #[default]
    Gru,
    Lstm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// Two fully-connected ReLU layers.
    #[default]
    Mlp,
    /// A single LSTM step over the code.
    Recurrent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Number of values of each attribute, in schema order.
    pub attr_cardinalities: Vec<usize>,
    pub cell: CellType,
    pub discriminator: DiscriminatorKind,
    pub disc_hidden: usize,
    pub freeze_embeddings: bool,
}

impl ModelConfig {
    /// 32 for one or two attributes, 50 otherwise.
    pub fn default_latent_dim(num_attributes: usize) -> usize {
        if num_attributes <= 2 {
            32
        } else {
            50
        }
    }

    /// 64 for the fully-connected discriminator; for the recurrent one, 50
    /// with one or two attributes and 64 otherwise.
    pub fn default_disc_hidden(kind: DiscriminatorKind, num_attributes: usize) -> usize {
        match kind {
            DiscriminatorKind::Recurrent if num_attributes <= 2 => 50,
            _ => 64,
        }
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_cardinalities.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("emb_dim", self.emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("disc_hidden", self.disc_hidden),
        ];
        for (k, v) in dims {
            if v == 0 {
                return Err(Error::config(format!("model.{k}"), "must be > 0"));
            }
        }
        if self.vocab_size <= EOS as usize + 1 {
            return Err(Error::config("model.vocab_size", "must exceed the special tokens"));
        }
        if self.attr_cardinalities.is_empty() || self.attr_cardinalities.iter().any(|&c| c < 2) {
            return Err(Error::config(
                "model.attr_cardinalities",
                "need at least one attribute, each with at least two values",
            ));
        }
        Ok(())
    }

    /// Parameter shapes by name, in the order they are initialized.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (v, e, h, dz) = (self.vocab_size, self.emb_dim, self.hidden_dim, self.latent_dim);
        let g = self.cell.gates() * h;
        let mut s: Vec<(String, Vec<usize>)> = vec![("emb.weight".into(), vec![v, e])];
        let rnn = |p: &str, input: usize, hidden: usize, gates: usize, s: &mut Vec<(String, Vec<usize>)>| {
            s.push((format!("{p}.w_ih"), vec![input, gates]));
            s.push((format!("{p}.w_hh"), vec![hidden, gates]));
            s.push((format!("{p}.b_ih"), vec![gates]));
            s.push((format!("{p}.b_hh"), vec![gates]));
        };
        rnn("enc.rnn", e, h, g, &mut s);
        s.push(("enc.mu.w".into(), vec![h, dz]));
        s.push(("enc.mu.b".into(), vec![dz]));
        s.push(("enc.logvar.w".into(), vec![h, dz]));
        s.push(("enc.logvar.b".into(), vec![dz]));
        s.push(("dec.init.w".into(), vec![dz + self.attr_dim(), h]));
        s.push(("dec.init.b".into(), vec![h]));
        rnn("dec.rnn", e, h, g, &mut s);
        s.push(("dec.out.w".into(), vec![h, v]));
        s.push(("dec.out.b".into(), vec![v]));
        let dh = self.disc_hidden;
        match self.discriminator {
            DiscriminatorKind::Mlp => {
                s.push(("disc.l1.w".into(), vec![dz, dh]));
                s.push(("disc.l1.b".into(), vec![dh]));
                s.push(("disc.l2.w".into(), vec![dh, dh]));
                s.push(("disc.l2.b".into(), vec![dh]));
            }
            DiscriminatorKind::Recurrent => rnn("disc.rnn", dz, dh, 4 * dh, &mut s),
        }
        s.push(("disc.head.w".into(), vec![dh, self.attr_dim()]));
        s.push(("disc.head.b".into(), vec![self.attr_dim()]));
        s
    }
}

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Orthogonal recurrent matrices, uniform(-0.1, 0.1) elsewhere.
    Random { seed: u64 },
    Zeros,
}

/// Posterior parameters and a sampled code for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

/// `mu + exp(0.5 logvar) * noise`.
pub fn reparameterize(mu: &Tensor, logvar: &Tensor, noise: &Tensor) -> Result<Tensor> {
    Ok((mu + (logvar.affine(0.5, 0.0)?.exp()? * noise)?)?)
}

/// Per-attribute probability vectors for one code.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    pub probs: Vec<Vec<f64>>,
}

impl DiscriminatorOutput {
    /// Splits batched log-probability heads into one output per row.
    pub fn from_log_probs(heads: &[Tensor]) -> Result<Vec<Self>> {
        let rows: Vec<Vec<Vec<f64>>> = heads
            .iter()
            .map(|h| Ok(h.exp()?.to_dtype(DType::F64)?.to_vec2::<f64>()?))
            .collect::<Result<_>>()?;
        let b = rows.first().map_or(0, Vec::len);
        Ok((0..b)
            .map(|i| DiscriminatorOutput {
                probs: rows.iter().map(|h| h[i].clone()).collect(),
            })
            .collect())
    }
}

/// Free-running decoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
}

/// A padded batch of framed sentences with their attribute vectors.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Framed ids padded with PAD to the batch length.
    pub ids: Vec<Vec<u32>>,
    pub lengths: Vec<usize>,
    pub labels: Vec<Vec<usize>>,
    pub tokens: Tensor,
    pub mask: Tensor,
    pub attrs: Tensor,
    pub label_tensor: Tensor,
}

impl Batch {
    pub fn new(examples: &[&LabeledExample], dtype: DType) -> Result<Self> {
        let ids: Vec<Vec<u32>> = examples.iter().map(|e| e.ids.clone()).collect();
        let attrs: Vec<&AttributeVector> = examples.iter().map(|e| &e.attributes).collect();
        Self::from_parts(&ids, &attrs, dtype)
    }

    pub fn from_parts(ids: &[Vec<u32>], attrs: &[&AttributeVector], dtype: DType) -> Result<Self> {
        if ids.is_empty() || ids.len() != attrs.len() {
            return Err(Error::InvalidInput("empty batch or attribute count mismatch".into()));
        }
        if ids.iter().any(|s| s.len() < 2) {
            return Err(Error::InvalidInput("sequences must be framed by SOS and EOS".into()));
        }
        let dev = Device::Cpu;
        let b = ids.len();
        let len = ids.iter().map(Vec::len).max().unwrap_or(0);
        let lengths: Vec<usize> = ids.iter().map(Vec::len).collect();
        let padded: Vec<Vec<u32>> = ids
            .iter()
            .map(|s| {
                let mut p = s.clone();
                p.resize(len, PAD);
                p
            })
            .collect();
        let tokens = Tensor::from_vec(padded.concat(), (b, len), &dev)?;
        let mask: Vec<f64> = lengths
            .iter()
            .flat_map(|&l| (0..len).map(move |t| if t < l { 1.0 } else { 0.0 }))
            .collect();
        let mask = Tensor::from_vec(mask, (b, len), &dev)?.to_dtype(dtype)?;
        let a_dim = attrs[0].onehot.len();
        let onehot: Vec<f32> = attrs.iter().flat_map(|a| a.onehot.iter().copied()).collect();
        if onehot.len() != b * a_dim {
            return Err(Error::InvalidInput("ragged attribute vectors".into()));
        }
        let attrs_t = Tensor::from_vec(onehot, (b, a_dim), &dev)?.to_dtype(dtype)?;
        let labels: Vec<Vec<usize>> = attrs.iter().map(|a| a.labels.clone()).collect();
        let k = labels[0].len();
        let flat: Vec<u32> = labels.iter().flat_map(|l| l.iter().map(|&x| x as u32)).collect();
        let label_tensor = Tensor::from_vec(flat, (b, k), &dev)?;
        Ok(Self {
            ids: padded,
            lengths,
            labels,
            tokens,
            mask,
            attrs: attrs_t,
            label_tensor,
        })
    }

    pub fn size(&self) -> usize {
        self.ids.len()
    }

    pub fn seq_len(&self) -> usize {
        self.ids[0].len()
    }

    /// Decoder inputs: every position but the last.
    pub fn decoder_inputs(&self) -> Vec<Vec<u32>> {
        self.ids.iter().map(|s| s[..s.len() - 1].to_vec()).collect()
    }

    /// Decoder targets and their mask: every position but the first.
    pub fn targets(&self) -> Result<(Tensor, Tensor)> {
        let l = self.seq_len();
        Ok((
            self.tokens.narrow(1, 1, l - 1)?,
            self.mask.narrow(1, 1, l - 1)?,
        ))
    }
}

/// Builds a `[B, L]` u32 tensor from equal-length rows.
pub fn ids_tensor(rows: &[Vec<u32>]) -> Result<Tensor> {
    let l = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != l) {
        return Err(Error::InvalidInput("ragged id rows".into()));
    }
    Ok(Tensor::from_vec(rows.concat(), (rows.len(), l), &Device::Cpu)?)
}

/// Trainable model parameters plus their configuration.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ModelState {
    pub fn new(config: ModelConfig, init: Init, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(match init {
            Init::Random { seed } => seed,
            Init::Zeros => 0,
        });
        for (name, shape) in config.parameter_shapes() {
            let n: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; n],
                Init::Random { .. } if name.ends_with(".w_hh") => {
                    params::orthogonal_blocks(&mut rng, shape[0], shape[1])
                }
                Init::Random { .. } => params::uniform(&mut rng, n, INIT_SCALE),
            };
            params.insert(&name, &shape, data)?;
        }
        Ok(Self { config, params })
    }

    /// Restores a model from named row-major arrays.
    pub fn from_arrays(config: ModelConfig, arrays: &BTreeMap<String, (Vec<usize>, Vec<f32>)>, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(dtype);
        for (name, shape) in config.parameter_shapes() {
            let (got_shape, data) = arrays
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if *got_shape != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {got_shape:?}, expected {shape:?}"
                )));
            }
            params.insert(&name, &shape, data.iter().map(|&x| x as f64).collect())?;
        }
        if arrays.len() != config.parameter_shapes().len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self { config, params })
    }

    /// Replaces the embedding table, e.g. with pretrained vectors.
    pub fn set_embeddings(&self, table: &[Vec<f32>]) -> Result<()> {
        let (v, e) = (self.config.vocab_size, self.config.emb_dim);
        if table.len() != v || table.iter().any(|r| r.len() != e) {
            return Err(Error::InvalidInput(format!("embedding table must be {v}x{e}")));
        }
        let t = Tensor::from_vec(table.concat(), (v, e), &Device::Cpu)?.to_dtype(self.params.dtype())?;
        self.params.var("emb.weight")?.set(&t)?;
        Ok(())
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    /// Graph-tracked view for training.
    pub fn weights(&self) -> Weights {
        self.view(false)
    }

    /// Detached view for inference.
    pub fn frozen(&self) -> Weights {
        self.view(true)
    }

    fn view(&self, detached: bool) -> Weights {
        let map = self
            .params
            .iter()
            .map(|(k, v)| {
                let t = if detached { v.as_detached_tensor() } else { v.as_tensor().clone() };
                (k.to_string(), t)
            })
            .collect();
        Weights {
            config: self.config.clone(),
            map,
        }
    }

    /// Names of the generator (embedding, encoder, decoder) parameters.
    pub fn generator_prefixes(&self) -> Vec<&'static str> {
        if self.config.freeze_embeddings {
            vec!["enc.", "dec."]
        } else {
            vec!["emb.", "enc.", "dec."]
        }
    }

    /// Posterior of one framed sentence, with `z` drawn using `noise`.
    pub fn encode_one(&self, ids: &[u32], noise: Option<&[f64]>) -> Result<LatentCode> {
        if ids.is_empty() {
            return Err(Error::InvalidInput("cannot encode an empty sequence".into()));
        }
        let w = self.frozen();
        let tokens = ids_tensor(&[ids.to_vec()])?;
        let mask = Tensor::ones((1, ids.len()), self.dtype(), &Device::Cpu)?;
        let (mu, logvar) = w.encode(&tokens, &mask)?;
        let row = |t: &Tensor| -> Result<Vec<f64>> {
            Ok(t.to_dtype(DType::F64)?.squeeze(0)?.to_vec1::<f64>()?)
        };
        let (mu, logvar) = (row(&mu)?, row(&logvar)?);
        let z = match noise {
            Some(eps) => mu
                .iter()
                .zip(&logvar)
                .zip(eps)
                .map(|((m, l), e)| m + (0.5 * l).exp() * e)
                .collect(),
            None => mu.clone(),
        };
        Ok(LatentCode { mu, logvar, z })
    }
}

/// A snapshot of parameter tensors with the forward passes.
#[derive(Debug, Clone)]
pub struct Weights {
    pub config: ModelConfig,
    map: BTreeMap<String, Tensor>,
}

impl Weights {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no parameter named `{name}`")))
    }

    fn linear(&self, x: &Tensor, prefix: &str) -> Result<Tensor> {
        Ok(x.matmul(self.get(&format!("{prefix}.w"))?)?
            .broadcast_add(self.get(&format!("{prefix}.b"))?)?)
    }

    fn cell(&self, prefix: &str, kind: CellType, hidden: usize) -> Result<Cell> {
        Ok(Cell {
            kind,
            w_ih: self.get(&format!("{prefix}.w_ih"))?.clone(),
            w_hh: self.get(&format!("{prefix}.w_hh"))?.clone(),
            b_ih: self.get(&format!("{prefix}.b_ih"))?.clone(),
            b_hh: self.get(&format!("{prefix}.b_hh"))?.clone(),
            hidden,
        })
    }

    pub fn embed(&self, ids: &Tensor) -> Result<Tensor> {
        let emb = self.get("emb.weight")?;
        let dims = ids.dims().to_vec();
        let flat = emb.index_select(&ids.flatten_all()?, 0)?;
        let mut shape = dims;
        shape.push(self.config.emb_dim);
        Ok(flat.reshape(shape)?)
    }

    /// Posterior mean and log-variance for `[B, L]` framed ids.
    pub fn encode(&self, tokens: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, l) = tokens.dims2()?;
        if l == 0 {
            return Err(Error::InvalidInput("cannot encode an empty sequence".into()));
        }
        let h = self.config.hidden_dim;
        let cell = self.cell("enc.rnn", self.config.cell, h)?;
        let xw = cell.project(&self.embed(tokens)?)?;
        let h0 = Tensor::zeros((b, h), xw.dtype(), xw.device())?;
        let mut state = CellState::new(self.config.cell, h0)?;
        for t in 0..l {
            let next = cell.step(&xw.narrow(1, t, 1)?.squeeze(1)?, &state)?;
            let m = mask.narrow(1, t, 1)?;
            state = state.masked(next, &m)?;
        }
        let hfin = state.h();
        Ok((self.linear(hfin, "enc.mu")?, self.linear(hfin, "enc.logvar")?))
    }

    /// Decoder initial hidden state `Linear(z ++ a)`.
    pub fn init_hidden(&self, z: &Tensor, attrs: &Tensor) -> Result<Tensor> {
        let za = Tensor::cat(&[z, attrs], 1)?;
        self.linear(&za, "dec.init")
    }

    /// Teacher-forced logits `[B, T, V]` for decoder inputs `[B, T]`.
    pub fn decode_teacher_forced(&self, z: &Tensor, attrs: &Tensor, inputs: &Tensor) -> Result<Tensor> {
        let (b, t) = inputs.dims2()?;
        let h = self.config.hidden_dim;
        let cell = self.cell("dec.rnn", self.config.cell, h)?;
        let xw = cell.project(&self.embed(inputs)?)?;
        let mut state = CellState::new(self.config.cell, self.init_hidden(z, attrs)?)?;
        let mut hs = Vec::with_capacity(t);
        for s in 0..t {
            state = cell.step(&xw.narrow(1, s, 1)?.squeeze(1)?, &state)?;
            hs.push(state.h().clone());
        }
        let stacked = Tensor::stack(&hs, 1)?.reshape((b * t, h))?;
        Ok(self.linear(&stacked, "dec.out")?.reshape((b, t, self.config.vocab_size))?)
    }

    /// Autoregressive decoding from SOS; returns content ids (no SOS/EOS).
    /// Sampling draws row `i` from `rngs[i]`.
    pub fn decode_free(
        &self,
        z: &Tensor,
        attrs: &Tensor,
        mode: DecodeMode,
        max_len: usize,
        rngs: &mut [ChaCha8Rng],
    ) -> Result<Vec<Vec<u32>>> {
        let b = z.dim(0)?;
        if let DecodeMode::Sample { temperature } = mode {
            if !(temperature > 0.0) {
                return Err(Error::InvalidInput("temperature must be > 0".into()));
            }
            if rngs.len() < b {
                return Err(Error::InvalidInput("one rng per row is required for sampling".into()));
            }
        }
        let h = self.config.hidden_dim;
        let cell = self.cell("dec.rnn", self.config.cell, h)?;
        let mut state = CellState::new(self.config.cell, self.init_hidden(z, attrs)?)?;
        let mut prev = vec![SOS; b];
        let mut out = vec![Vec::new(); b];
        let mut done = vec![false; b];
        for _ in 0..max_len {
            let x = self.embed(&Tensor::new(prev.as_slice(), z.device())?)?;
            state = cell.step(&cell.project(&x)?, &state)?;
            let logits = self
                .linear(state.h(), "dec.out")?
                .to_dtype(DType::F64)?
                .to_vec2::<f64>()?;
            for i in 0..b {
                if done[i] {
                    continue;
                }
                let mut row = logits[i].clone();
                row[PAD as usize] = f64::NEG_INFINITY;
                row[SOS as usize] = f64::NEG_INFINITY;
                let tok = match mode {
                    DecodeMode::Greedy => argmax(&row),
                    DecodeMode::Sample { temperature } => sample(&row, temperature, &mut rngs[i]),
                };
                if tok == EOS {
                    done[i] = true;
                } else {
                    out[i].push(tok);
                    prev[i] = tok;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        if let Some(bad) = out.iter().flatten().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::InvalidInput(format!("decoded id {bad} out of range")));
        }
        Ok(out)
    }

    /// Per-attribute log-probabilities, each `[B, |V_k|]`.
    pub fn discriminate(&self, z: &Tensor) -> Result<Vec<Tensor>> {
        let hidden = match self.config.discriminator {
            DiscriminatorKind::Mlp => {
                let h1 = self.linear(z, "disc.l1")?.relu()?;
                self.linear(&h1, "disc.l2")?.relu()?
            }
            DiscriminatorKind::Recurrent => {
                let dh = self.config.disc_hidden;
                let cell = self.cell("disc.rnn", CellType::Lstm, dh)?;
                let h0 = Tensor::zeros((z.dim(0)?, dh), z.dtype(), z.device())?;
                let state = CellState::new(CellType::Lstm, h0)?;
                cell.step(&cell.project(z)?, &state)?.h().clone()
            }
        };
        let logits = self.linear(&hidden, "disc.head")?;
        let mut heads = Vec::with_capacity(self.config.attr_cardinalities.len());
        let mut offset = 0;
        for &c in &self.config.attr_cardinalities {
            heads.push(log_softmax(&logits.narrow(D::Minus1, offset, c)?, D::Minus1)?);
            offset += c;
        }
        Ok(heads)
    }
}

fn argmax(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u32
}

fn sample(row: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> u32 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i as u32;
        }
        u -= w;
    }
    argmax(row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AttributeSchema, UNK};
    use crate::objectives::apply_word_dropout;

    fn tiny(cell: CellType, disc: DiscriminatorKind) -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            emb_dim: 4,
            hidden_dim: 8,
            latent_dim: 4,
            attr_cardinalities: vec![2, 2],
            cell,
            discriminator: disc,
            disc_hidden: 6,
            freeze_embeddings: false,
        }
    }

    fn onehots(labels: &[[usize; 2]]) -> Tensor {
        let schema = AttributeSchema::new(vec![("a", &["x", "y"]), ("b", &["u", "v"])]).unwrap();
        let v: Vec<f32> = labels
            .iter()
            .flat_map(|l| schema.vector_from_indices(l).unwrap().onehot)
            .collect();
        Tensor::from_vec(v, (labels.len(), 4), &Device::Cpu).unwrap()
    }

    #[test]
    fn encode_shapes_and_zero_init() {
        let cfg = tiny(CellType::Gru, DiscriminatorKind::Mlp);
        let m = ModelState::new(cfg.clone(), Init::Random { seed: 1 }, DType::F32).unwrap();
        let code = m.encode_one(&[SOS, 5, 6, EOS], None).unwrap();
        assert_eq!((code.mu.len(), code.logvar.len()), (4, 4));
        assert!(m.encode_one(&[], None).is_err());
        let zero = ModelState::new(cfg, Init::Zeros, DType::F32).unwrap();
        assert!(zero.encode_one(&[SOS, 5, EOS], None).unwrap().mu.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn default_latent_dims() {
        assert_eq!(ModelConfig::default_latent_dim(2), 32);
        assert_eq!(ModelConfig::default_latent_dim(3), 50);
    }

    #[test]
    fn reparameterize_examples() {
        let dev = Device::Cpu;
        let mu = Tensor::new(&[[1.0f64, -2.0]], &dev).unwrap();
        let lv = Tensor::new(&[[0.3f64, 0.1]], &dev).unwrap();
        let zero = mu.zeros_like().unwrap();
        assert_eq!(reparameterize(&mu, &lv, &zero).unwrap().to_vec2::<f64>().unwrap(), mu.to_vec2::<f64>().unwrap());
        let eps = Tensor::new(&[[0.7f64, -1.1]], &dev).unwrap();
        let z = reparameterize(&zero, &zero, &eps).unwrap();
        assert_eq!(z.to_vec2::<f64>().unwrap(), eps.to_vec2::<f64>().unwrap());
    }

    #[test]
    fn reparameterized_variance_matches() {
        use rand_distr::StandardNormal;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let noise = Tensor::from_vec(noise, (n, 1), &Device::Cpu).unwrap();
        let mu = Tensor::full(0.4f64, (n, 1), &Device::Cpu).unwrap();
        let lv = Tensor::full(0.7f64, (n, 1), &Device::Cpu).unwrap();
        let z: Vec<f64> = reparameterize(&mu, &lv, &noise).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var / 0.7f64.exp() - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn teacher_forced_shape_and_dropout_inputs() {
        let cfg = tiny(CellType::Lstm, DiscriminatorKind::Recurrent);
        let m = ModelState::new(cfg, Init::Random { seed: 2 }, DType::F32).unwrap();
        let w = m.frozen();
        let inputs = vec![vec![SOS, 5, 6, 7]];
        let z = Tensor::zeros((1, 4), DType::F32, &Device::Cpu).unwrap();
        let logits = w.decode_teacher_forced(&z, &onehots(&[[0, 1]]), &ids_tensor(&inputs).unwrap()).unwrap();
        assert_eq!(logits.dims(), [1, 4, 12]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(apply_word_dropout(&inputs[0], 0.0, &mut rng), inputs[0]);
        assert_eq!(apply_word_dropout(&inputs[0], 1.0, &mut rng), [SOS, UNK, UNK, UNK]);
    }

    #[test]
    fn decode_free_greedy_is_deterministic_and_bounded() {
        let cfg = tiny(CellType::Gru, DiscriminatorKind::Mlp);
        let m = ModelState::new(cfg, Init::Random { seed: 3 }, DType::F32).unwrap();
        let w = m.frozen();
        let z = Tensor::new(&[[0.5f32, -0.2, 0.1, 0.9], [0.0, 0.0, 1.0, -1.0]], &Device::Cpu).unwrap();
        let a = onehots(&[[0, 0], [1, 1]]);
        let one = w.decode_free(&z, &a, DecodeMode::Greedy, 20, &mut []).unwrap();
        let two = w.decode_free(&z, &a, DecodeMode::Greedy, 20, &mut []).unwrap();
        assert_eq!(one, two);
        assert!(one.iter().all(|s| s.len() <= 20 && !s.contains(&PAD) && !s.contains(&SOS)));
        let mut rngs: Vec<ChaCha8Rng> = (0..2).map(ChaCha8Rng::seed_from_u64).collect();
        let cold = w.decode_free(&z, &a, DecodeMode::Sample { temperature: 1e-4 }, 20, &mut rngs).unwrap();
        assert_eq!(cold, one);
    }

    #[test]
    fn discriminator_heads() {
        for kind in [DiscriminatorKind::Mlp, DiscriminatorKind::Recurrent] {
            let mut cfg = tiny(CellType::Gru, kind);
            cfg.attr_cardinalities = vec![2, 2, 3];
            let m = ModelState::new(cfg.clone(), Init::Random { seed: 4 }, DType::F64).unwrap();
            let z = Tensor::new(&[[0.5f64, -0.2, 0.1, 0.9]], &Device::Cpu).unwrap();
            let out = DiscriminatorOutput::from_log_probs(&m.frozen().discriminate(&z).unwrap()).unwrap();
            assert_eq!(out[0].probs.len(), 3);
            for p in &out[0].probs {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            }
            let zero = ModelState::new(cfg, Init::Zeros, DType::F64).unwrap();
            let out = DiscriminatorOutput::from_log_probs(&zero.frozen().discriminate(&z).unwrap()).unwrap();
            assert_eq!(out[0].probs[2], vec![1.0 / 3.0; 3]);
        }
    }

    #[test]
    fn attributes_change_initial_state() {
        let cfg = tiny(CellType::Gru, DiscriminatorKind::Mlp);
        let m = ModelState::new(cfg, Init::Random { seed: 5 }, DType::F32).unwrap();
        let w = m.frozen();
        let z = Tensor::new(&[[0.1f32, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4]], &Device::Cpu).unwrap();
        let h = w.init_hidden(&z, &onehots(&[[0, 0], [1, 0]])).unwrap();
        let diff = (h.get(0).unwrap() - h.get(1).unwrap()).unwrap().sqr().unwrap().sum_all().unwrap();
        assert!(diff.to_scalar::<f32>().unwrap() > 0.0);
    }

    #[test]
    fn batching_does_not_change_results() {
        let cfg = tiny(CellType::Gru, DiscriminatorKind::Mlp);
        let m = ModelState::new(cfg, Init::Random { seed: 6 }, DType::F32).unwrap();
        let w = m.frozen();
        let schema = AttributeSchema::new(vec![("a", &["x", "y"]), ("b", &["u", "v"])]).unwrap();
        let av = schema.vector_from_indices(&[1, 0]).unwrap();
        let seqs = vec![vec![SOS, 5, 6, 7, 8, EOS], vec![SOS, 9, EOS], vec![SOS, 10, 11, EOS]];
        let together = Batch::from_parts(&seqs, &[&av, &av, &av], DType::F32).unwrap();
        let (mu_all, _) = w.encode(&together.tokens, &together.mask).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            let alone = Batch::from_parts(&[s.clone()], &[&av], DType::F32).unwrap();
            let (mu, _) = w.encode(&alone.tokens, &alone.mask).unwrap();
            let a: Vec<f32> = mu.squeeze(0).unwrap().to_vec1().unwrap();
            let b: Vec<f32> = mu_all.get(i).unwrap().to_vec1().unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
