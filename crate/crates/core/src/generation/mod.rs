//! Sampling sentences from the prior with requested attribute vectors.

use std::collections::{BTreeMap, HashSet};

use candle_core::{Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    AttributeSchema, AttributeVector, LabeledCorpus, LabeledSentence, Provenance, Vocabulary,
    MAX_LEN,
};
use crate::error::{Error, Result};
use crate::model::{DecodeMode, ModelState};

/// `n` i.i.d. standard-normal vectors of dimension `d_z`.
pub fn sample_prior<R: Rng + ?Sized>(n: usize, d_z: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d_z).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// One generated sentence with the labels it was requested with.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub ids: Vec<u32>,
    pub attributes: AttributeVector,
}

/// Decodes one code under one attribute vector.
pub fn generate(
    state: &ModelState,
    z: &[f64],
    attrs: &AttributeVector,
    mode: DecodeMode,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Generated> {
    let mut out = generate_batch(state, &[z.to_vec()], &[attrs], mode, max_len, std::slice::from_mut(rng))?;
    Ok(out.remove(0))
}

fn ensure_usable(state: &ModelState) -> Result<()> {
    if !state.params.all_finite()? {
        return Err(Error::NonFinite("model parameters contain NaN or infinity".into()));
    }
    Ok(())
}

fn generate_batch(
    state: &ModelState,
    zs: &[Vec<f64>],
    attrs: &[&AttributeVector],
    mode: DecodeMode,
    max_len: usize,
    rngs: &mut [ChaCha8Rng],
) -> Result<Vec<Generated>> {
    let dz = state.config.latent_dim;
    if zs.iter().any(|z| z.len() != dz) {
        return Err(Error::InvalidInput(format!("latent codes must have {dz} dimensions")));
    }
    let dev = Device::Cpu;
    let z = Tensor::from_vec(zs.concat(), (zs.len(), dz), &dev)?.to_dtype(state.dtype())?;
    let a_dim = state.config.attr_dim();
    let onehot: Vec<f32> = attrs.iter().flat_map(|a| a.onehot.iter().copied()).collect();
    if onehot.len() != zs.len() * a_dim {
        return Err(Error::InvalidInput(format!("attribute vectors must have {a_dim} entries")));
    }
    let a = Tensor::from_vec(onehot, (zs.len(), a_dim), &dev)?.to_dtype(state.dtype())?;
    let ids = state.frozen().decode_free(&z, &a, mode, max_len, rngs)?;
    Ok(ids
        .into_iter()
        .zip(attrs)
        .map(|(ids, a)| Generated {
            ids,
            attributes: (*a).clone(),
        })
        .collect())
}

/// Balanced generation request: `per_combination` sentences for every
/// combination of attribute values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub per_combination: usize,
    pub mode: DecodeMode,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    pub seed: u64,
    #[serde(default)]
    pub dedup: bool,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Restrict generation to these label-index combinations.
    #[serde(default)]
    pub combinations: Option<Vec<Vec<usize>>>,
}

fn default_max_len() -> usize {
    MAX_LEN
}

fn default_retries() -> usize {
    10
}

impl GenerationRequest {
    pub fn new(per_combination: usize, mode: DecodeMode, seed: u64) -> Self {
        Self {
            per_combination,
            mode,
            max_len: MAX_LEN,
            seed,
            dedup: false,
            max_retries: default_retries(),
            combinations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub corpus: LabeledCorpus,
    /// Missing sentences per combination (label names joined by `/`) when
    /// deduplication ran out of retries.
    pub shortfall: BTreeMap<String, usize>,
}

impl GeneratedDataset {
    pub fn has_shortfall(&self) -> bool {
        !self.shortfall.is_empty()
    }
}

/// The random stream of item `index` on attempt `attempt`.
fn item_rng(seed: u64, index: usize, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((attempt as u64) << 40) | index as u64);
    rng
}

const CHUNK: usize = 256;

/// Generates a balanced labeled corpus. Each item draws its code (and its
/// samples) from its own stream, so the output does not depend on batching.
pub fn generate_dataset(
    req: &GenerationRequest,
    state: &ModelState,
    schema: &AttributeSchema,
    vocab: &Vocabulary,
) -> Result<GeneratedDataset> {
    ensure_usable(state)?;
    if schema.cardinalities() != state.config.attr_cardinalities {
        return Err(Error::InvalidInput("schema does not match the model".into()));
    }
    let combos = match &req.combinations {
        Some(c) => c.clone(),
        None => schema.combinations(),
    };
    let vectors: Vec<AttributeVector> = combos
        .iter()
        .map(|c| schema.vector_from_indices(c))
        .collect::<Result<_>>()?;
    let items: Vec<usize> = (0..vectors.len())
        .flat_map(|c| std::iter::repeat_n(c, req.per_combination))
        .collect();
    let dz = state.config.latent_dim;
    let run = |indices: &[usize], attempt: usize| -> Result<Vec<Generated>> {
        let chunks: Vec<&[usize]> = indices.chunks(CHUNK).collect();
        let parts: Vec<Vec<Generated>> = chunks
            .par_iter()
            .map(|chunk| {
                let mut rngs: Vec<ChaCha8Rng> = chunk.iter().map(|&i| item_rng(req.seed, i, attempt)).collect();
                let zs: Vec<Vec<f64>> = rngs.iter_mut().map(|r| sample_prior(1, dz, r).remove(0)).collect();
                let attrs: Vec<&AttributeVector> = chunk.iter().map(|&i| &vectors[items[i]]).collect();
                generate_batch(state, &zs, &attrs, req.mode, req.max_len, &mut rngs)
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    };
    let all: Vec<usize> = (0..items.len()).collect();
    let mut results: Vec<Option<Generated>> = run(&all, 0)?.into_iter().map(Some).collect();
    let mut shortfall = BTreeMap::new();
    if req.dedup {
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut pending: Vec<usize> = Vec::new();
        for (i, r) in results.iter_mut().enumerate() {
            if let Some(g) = r {
                if !seen.insert(g.ids.clone()) {
                    *r = None;
                    pending.push(i);
                }
            }
        }
        for attempt in 1..=req.max_retries {
            if pending.is_empty() {
                break;
            }
            let fresh = run(&pending, attempt)?;
            let mut still = Vec::new();
            for (i, g) in pending.into_iter().zip(fresh) {
                if seen.insert(g.ids.clone()) {
                    results[i] = Some(g);
                } else {
                    still.push(i);
                }
            }
            pending = still;
        }
        for i in pending {
            let name = schema.label_names(&combos[items[i]]).join("/");
            *shortfall.entry(name).or_insert(0) += 1;
        }
    }
    let sentences = results
        .into_iter()
        .flatten()
        .map(|g| {
            let tokens = vocab.decode(&g.ids);
            LabeledSentence {
                text: tokens.join(" "),
                tokens,
                labels: g.attributes.labels,
            }
        })
        .collect();
    Ok(GeneratedDataset {
        corpus: LabeledCorpus {
            schema: schema.clone(),
            sentences,
        },
        shortfall,
    })
}

/// Labeled-corpus records with a provenance field.
pub fn with_provenance(corpus: &LabeledCorpus, checkpoint: &str, seed: u64) -> Vec<crate::corpus::LabeledRecord> {
    corpus
        .to_records()
        .into_iter()
        .map(|mut r| {
            r.provenance = Some(Provenance {
                source: "cga".into(),
                checkpoint: checkpoint.to_string(),
                seed,
            });
            r
        })
        .collect()
}
