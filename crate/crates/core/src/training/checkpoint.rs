//! Checkpoint container: magic, format version, a JSON header, then raw
//! little-endian f32 arrays in header order.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::{Adam, CheckpointMeta, TrainState};
use crate::corpus::{AttributeSchema, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelState};
use crate::rng::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CGACKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    schema: AttributeSchema,
    vocab: Vec<String>,
    run_config: String,
    training: TrainingHeader,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainingHeader {
    seed: u64,
    step: u64,
    epoch: u64,
    batch_in_epoch: u64,
    rng: RngState,
    best_val: Option<f64>,
    vae_opt: OptimizerHeader,
    disc_opt: OptimizerHeader,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip_norm: Option<f64>,
    t: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn opt_header(a: &Adam) -> OptimizerHeader {
    OptimizerHeader {
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        eps: a.eps,
        clip_norm: a.clip_norm,
        t: a.t,
    }
}

/// Serialized checkpoint bytes.
pub fn checkpoint_bytes(state: &TrainState) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let mut push = |name: String, t: &Tensor| -> Result<()> {
        let vals = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        entries.push(TensorEntry { name, shape: t.dims().to_vec() });
        for v in vals {
            data.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    };
    for (name, var) in state.model.params.iter() {
        push(format!("param/{name}"), var.as_tensor())?;
    }
    for (prefix, opt) in [("vae", &state.vae_opt), ("disc", &state.disc_opt)] {
        for (name, m) in &opt.m {
            push(format!("{prefix}.m/{name}"), m)?;
        }
        for (name, v) in &opt.v {
            push(format!("{prefix}.v/{name}"), v)?;
        }
    }
    let header = Header {
        model: state.model.config.clone(),
        schema: state.meta.schema.clone(),
        vocab: state.meta.vocab.tokens().to_vec(),
        run_config: state.meta.run_config.clone(),
        training: TrainingHeader {
            seed: state.seed,
            step: state.step,
            epoch: state.epoch,
            batch_in_epoch: state.batch_in_epoch,
            rng: state.rng_state(),
            best_val: state.best_val,
            vae_opt: opt_header(&state.vae_opt),
            disc_opt: opt_header(&state.disc_opt),
        },
        tensors: entries,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(20 + json.len() + data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    Ok(out)
}

/// Writes a checkpoint atomically (temporary file then rename).
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    header.schema.validate()?;
    if header.vocab.len() != header.model.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} tokens but the model expects {}",
            header.vocab.len(),
            header.model.vocab_size
        )));
    }
    if header.schema.cardinalities() != header.model.attr_cardinalities {
        return Err(bad("attribute schema does not match the model"));
    }
    let mut data = &bytes[20 + hlen..];
    let mut arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    for e in &header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = data.get(..4 * n).ok_or_else(|| bad("truncated tensor data"))?;
        let vals = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        arrays.insert(e.name.clone(), (e.shape.clone(), vals));
        data = &data[4 * n..];
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let take = |prefix: &str| -> BTreeMap<String, (Vec<usize>, Vec<f32>)> {
        arrays
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|n| (n.to_string(), v.clone())))
            .collect()
    };
    let model = ModelState::from_arrays(header.model.clone(), &take("param/"), DType::F32)?;
    let to_tensor = |(shape, vals): &(Vec<usize>, Vec<f32>)| -> Result<Tensor> {
        Ok(Tensor::from_vec(vals.clone(), shape.as_slice(), &Device::Cpu)?)
    };
    let restore_opt = |h: &OptimizerHeader, prefix: &str| -> Result<Adam> {
        let mut a = Adam::new(h.lr, h.clip_norm);
        a.beta1 = h.beta1;
        a.beta2 = h.beta2;
        a.eps = h.eps;
        a.t = h.t;
        for (name, arr) in take(&format!("{prefix}.m/")) {
            check_moment(&model, &name, &arr.0)?;
            a.m.insert(name, to_tensor(&arr)?);
        }
        for (name, arr) in take(&format!("{prefix}.v/")) {
            check_moment(&model, &name, &arr.0)?;
            a.v.insert(name, to_tensor(&arr)?);
        }
        Ok(a)
    };
    let t = &header.training;
    let vae_opt = restore_opt(&t.vae_opt, "vae")?;
    let disc_opt = restore_opt(&t.disc_opt, "disc")?;
    let rng = t.rng.restore().ok_or_else(|| bad("invalid rng state"))?;
    let vocab = Vocabulary::from_tokens(header.vocab.clone())?;
    Ok(TrainState {
        model,
        meta: CheckpointMeta {
            schema: header.schema,
            vocab,
            run_config: header.run_config,
        },
        seed: t.seed,
        step: t.step,
        epoch: t.epoch,
        batch_in_epoch: t.batch_in_epoch,
        vae_opt,
        disc_opt,
        rng,
        rng_seed: t.rng.seed,
        best_val: t.best_val,
    })
}

fn check_moment(model: &ModelState, name: &str, shape: &[usize]) -> Result<()> {
    let var = model.params.var(name).map_err(|_| {
        Error::Checkpoint(format!("optimizer moment for unknown parameter `{name}`"))
    })?;
    if var.dims() != shape {
        return Err(Error::Checkpoint(format!("optimizer moment `{name}` has the wrong shape")));
    }
    Ok(())
}

impl TrainState {
    /// Errors unless `vocab` is the vocabulary this model was trained with.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.model.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary size {} does not match the checkpoint's {}",
                vocab.len(),
                self.model.config.vocab_size
            )));
        }
        if vocab != &self.meta.vocab {
            return Err(Error::Checkpoint("vocabulary differs from the checkpoint's".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_setup;
    use super::super::*;
    use super::*;

    fn trained_state() -> (TrainState, Vec<LabeledExample>) {
        let (ex, cfg, meta) = toy_setup(24);
        let tc = TrainConfig { batch_size: 8, epochs: 1, ..TrainConfig::default() };
        let mut st = TrainState::new(cfg, meta, &tc, 1).unwrap();
        let mut sched = ScheduleConfig::yelp();
        sched.disc_k1 = 1;
        train(&mut st, &ex, &[], &tc, &sched, &TrainOptions::default()).unwrap();
        (st, ex)
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let (st, _) = trained_state();
        let a = checkpoint_bytes(&st).unwrap();
        let back = parse_checkpoint(&a).unwrap();
        assert_eq!(checkpoint_bytes(&back).unwrap(), a);
        assert_eq!(back.meta.schema, st.meta.schema);
        assert_eq!(back.step, 3);
        assert!(!back.disc_opt.m.is_empty());
    }

    #[test]
    fn rejects_mismatches() {
        let (st, _) = trained_state();
        let bytes = checkpoint_bytes(&st).unwrap();
        assert!(parse_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(parse_checkpoint(&wrong_version).is_err());
        let mut tokens = st.meta.vocab.tokens().to_vec();
        tokens.push("extra".into());
        let bigger = Vocabulary::from_tokens(tokens).unwrap();
        assert!(st.check_vocabulary(&bigger).is_err());
        st.check_vocabulary(&st.meta.vocab).unwrap();

        let mut other = st.clone();
        other.meta.vocab = bigger;
        assert!(parse_checkpoint(&checkpoint_bytes(&other).unwrap()).is_err());
        let mut dims = st.clone();
        dims.model.config.hidden_dim += 1;
        assert!(parse_checkpoint(&checkpoint_bytes(&dims).unwrap()).is_err());
    }
}
