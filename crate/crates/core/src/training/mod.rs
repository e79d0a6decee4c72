//! Alternating discriminator / generator training with schedules,
//! validation, metrics logging and checkpoints.

mod adam;
mod checkpoint;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, checkpoint_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::corpus::{AttributeSchema, LabeledExample, Vocabulary, EOS, SOS};
use crate::error::{Error, Result};
use crate::model::{ids_tensor, reparameterize, Batch, DecodeMode, Init, ModelConfig, ModelState, Weights};
use crate::objectives::{
    adversarial_term, apply_word_dropout, combine_generator_loss, context_loss,
    discriminator_loss, discriminator_weight, gaussian_kl, kl_weight, reconstruction_nll, scalar,
    word_dropout_rate, AdversarialMode, LossBreakdown, ScheduleConfig,
};
use crate::rng::{derive_seed, RngState};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: u64,
    pub lr_vae: f64,
    pub lr_disc: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub clip_norm: f64,
    /// Discriminator updates per generator update.
    pub disc_steps: usize,
    pub adversarial: AdversarialMode,
    /// Decoding length used when back-encoding for the context loss.
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 20,
            lr_vae: 1e-3,
            lr_disc: 1e-3,
            clip_norm: 5.0,
            disc_steps: 1,
            adversarial: AdversarialMode::Confusion,
            max_len: crate::corpus::MAX_LEN,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size", "must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("training.epochs", "must be >= 1"));
        }
        if !(self.lr_vae > 0.0) || !(self.lr_disc > 0.0) {
            return Err(Error::config("training.lr_vae", "learning rates must be > 0"));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::config("training.clip_norm", "must be >= 0"));
        }
        if self.max_len == 0 {
            return Err(Error::config("training.max_len", "must be >= 1"));
        }
        Ok(())
    }

    fn clip(&self) -> Option<f64> {
        (self.clip_norm > 0.0).then_some(self.clip_norm)
    }
}

/// Everything needed to use a checkpoint without the training corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub schema: AttributeSchema,
    pub vocab: Vocabulary,
    /// The run configuration, verbatim.
    pub run_config: String,
}

/// Model, optimizers, counters and random state of a training run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: ModelState,
    pub meta: CheckpointMeta,
    pub seed: u64,
    /// Completed generator updates.
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    /// Batches of the current epoch already consumed.
    pub batch_in_epoch: u64,
    pub vae_opt: Adam,
    pub disc_opt: Adam,
    pub rng: ChaCha8Rng,
    pub rng_seed: u64,
    pub best_val: Option<f64>,
}

impl TrainState {
    pub fn new(config: ModelConfig, meta: CheckpointMeta, train: &TrainConfig, seed: u64) -> Result<Self> {
        Self::with_dtype(config, meta, train, seed, DType::F32)
    }

    pub fn with_dtype(config: ModelConfig, meta: CheckpointMeta, train: &TrainConfig, seed: u64, dtype: DType) -> Result<Self> {
        if meta.vocab.len() != config.vocab_size {
            return Err(Error::InvalidInput(format!(
                "vocabulary has {} tokens but the model expects {}",
                meta.vocab.len(),
                config.vocab_size
            )));
        }
        let model = ModelState::new(config, Init::Random { seed: derive_seed(seed, "init") }, dtype)?;
        let rng_seed = derive_seed(seed, "noise");
        Ok(Self {
            model,
            meta,
            seed,
            step: 0,
            epoch: 0,
            batch_in_epoch: 0,
            vae_opt: Adam::new(train.lr_vae, train.clip()),
            disc_opt: Adam::new(train.lr_disc, train.clip()),
            rng: rand::SeedableRng::seed_from_u64(rng_seed),
            rng_seed,
            best_val: None,
        })
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(self.rng_seed, &self.rng)
    }
}

/// Per-step random inputs to the generator objective, fixed up front so the
/// objective is a deterministic function of the parameters.
#[derive(Debug, Clone)]
pub struct StepInputs {
    /// Standard-normal noise `[B, d_z]`.
    pub noise: Tensor,
    /// Decoder inputs after word dropout `[B, T]`.
    pub dec_inputs: Tensor,
    /// Back-encoded codes of the greedy reconstructions `[B, d_z]`.
    pub z_back: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambdas {
    pub kl: f64,
    pub ctx: f64,
    pub disc: f64,
}

/// Loss tensors of one generator evaluation.
#[derive(Debug, Clone)]
pub struct GeneratorTerms {
    pub total: Tensor,
    pub recon: Tensor,
    pub kl: Tensor,
    pub ctx: Option<Tensor>,
    pub adversarial: Option<Tensor>,
}

/// The full generator objective for one batch.
pub fn generator_loss(
    w: &Weights,
    batch: &Batch,
    inputs: &StepInputs,
    lambdas: Lambdas,
    mode: AdversarialMode,
) -> Result<GeneratorTerms> {
    let (mu, logvar) = w.encode(&batch.tokens, &batch.mask)?;
    let z = reparameterize(&mu, &logvar, &inputs.noise)?;
    let logits = w.decode_teacher_forced(&z, &batch.attrs, &inputs.dec_inputs)?;
    let (targets, tmask) = batch.targets()?;
    let recon = reconstruction_nll(&logits, &targets, &tmask)?;
    let kl = gaussian_kl(&mu, &logvar)?;
    let ctx = match &inputs.z_back {
        Some(zb) if lambdas.ctx > 0.0 => Some(context_loss(&mu, zb)?),
        _ => None,
    };
    let adversarial = if lambdas.disc > 0.0 {
        Some(adversarial_term(&w.discriminate(&z)?, &batch.label_tensor, mode)?)
    } else {
        None
    };
    let total = combine_generator_loss(
        &recon,
        &kl,
        ctx.as_ref(),
        adversarial.as_ref(),
        lambdas.kl,
        lambdas.ctx,
        lambdas.disc,
    )?;
    Ok(GeneratorTerms {
        total,
        recon,
        kl,
        ctx,
        adversarial,
    })
}

/// Greedy reconstructions of `z` re-encoded to posterior means.
pub fn back_encode(w: &Weights, z: &Tensor, attrs: &Tensor, max_len: usize) -> Result<Tensor> {
    let decoded = w.decode_free(z, attrs, DecodeMode::Greedy, max_len, &mut [])?;
    let framed: Vec<Vec<u32>> = decoded
        .into_iter()
        .map(|s| {
            let mut f = Vec::with_capacity(s.len() + 2);
            f.push(SOS);
            f.extend(s);
            f.push(EOS);
            f
        })
        .collect();
    let len = framed.iter().map(Vec::len).max().unwrap_or(2);
    let mask: Vec<f64> = framed
        .iter()
        .flat_map(|f| (0..len).map(move |t| if t < f.len() { 1.0 } else { 0.0 }))
        .collect();
    let padded: Vec<Vec<u32>> = framed
        .into_iter()
        .map(|mut f| {
            f.resize(len, crate::corpus::PAD);
            f
        })
        .collect();
    let mask = Tensor::from_vec(mask, (padded.len(), len), &Device::Cpu)?.to_dtype(z.dtype())?;
    let (mu_back, _) = w.encode(&ids_tensor(&padded)?, &mask)?;
    Ok(mu_back.detach())
}

/// Draws the noise and word-dropout inputs for a batch.
pub fn draw_step_inputs(
    rng: &mut ChaCha8Rng,
    batch: &Batch,
    latent_dim: usize,
    zeta: f64,
    dtype: DType,
) -> Result<(Tensor, Tensor)> {
    let b = batch.size();
    let noise: Vec<f64> = (0..b * latent_dim).map(|_| rng.sample(StandardNormal)).collect();
    let noise = Tensor::from_vec(noise, (b, latent_dim), &Device::Cpu)?.to_dtype(dtype)?;
    let dropped: Vec<Vec<u32>> = batch
        .decoder_inputs()
        .iter()
        .map(|row| apply_word_dropout(row, zeta, rng))
        .collect();
    Ok((noise, ids_tensor(&dropped)?))
}

/// One discriminator half-step (when its weight is active) followed by one
/// generator half-step.
pub fn train_step(
    state: &mut TrainState,
    batch: &Batch,
    cfg: &TrainConfig,
    sched: &ScheduleConfig,
) -> Result<LossBreakdown> {
    let s = state.step;
    let zeta = word_dropout_rate(s, sched);
    let lambdas = Lambdas {
        kl: kl_weight(s, sched),
        ctx: sched.ctx_weight,
        disc: discriminator_weight(s, sched),
    };
    let dtype = state.model.dtype();
    let (noise, dec_inputs) =
        draw_step_inputs(&mut state.rng, batch, state.model.config.latent_dim, zeta, dtype)?;

    let frozen = state.model.frozen();
    let (mu0, lv0) = frozen.encode(&batch.tokens, &batch.mask)?;
    let z0 = reparameterize(&mu0, &lv0, &noise)?.detach();

    let disc_group = state.model.params.group(&["disc."]);
    let mut disc_value = scalar(&discriminator_loss(&frozen.discriminate(&z0)?, &batch.label_tensor)?)?;
    if lambdas.disc > 0.0 {
        for _ in 0..cfg.disc_steps {
            let w = state.model.weights();
            let loss = discriminator_loss(&w.discriminate(&z0)?, &batch.label_tensor)?;
            disc_value = scalar(&loss)?;
            ensure_finite(disc_value, "discriminator loss", s, batch)?;
            let grads = loss.backward()?;
            state.disc_opt.step(&disc_group, &grads)?;
        }
    }

    let z_back = if lambdas.ctx > 0.0 {
        Some(back_encode(&frozen, &z0, &batch.attrs, cfg.max_len)?)
    } else {
        None
    };
    let inputs = StepInputs {
        noise,
        dec_inputs,
        z_back,
    };
    let w = state.model.weights();
    let terms = generator_loss(&w, batch, &inputs, lambdas, cfg.adversarial)?;
    let total = scalar(&terms.total)?;
    ensure_finite(total, "generator loss", s, batch)?;
    let grads = terms.total.backward()?;
    let gen_group = state.model.params.group(&state.model.generator_prefixes());
    state.vae_opt.step(&gen_group, &grads)?;
    state.step += 1;

    let kl = scalar(&terms.kl)?;
    let opt = |t: &Option<Tensor>| t.as_ref().map(scalar).transpose().map(|v| v.unwrap_or(0.0));
    Ok(LossBreakdown {
        recon_nll: scalar(&terms.recon)?,
        kl,
        kl_weighted: lambdas.kl * kl,
        disc: disc_value,
        disc_adversarial: opt(&terms.adversarial)?,
        ctx: opt(&terms.ctx)?,
        total_generator: total,
        total_discriminator: disc_value,
        lambda_kl: lambdas.kl,
        lambda_disc: lambdas.disc,
        zeta,
    })
}

fn ensure_finite(v: f64, what: &str, step: u64, batch: &Batch) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    let dump = serde_json::json!({ "step": step, "ids": batch.ids, "labels": batch.labels });
    Err(Error::NonFinite(format!("{what} is {v} at step {step}; batch: {dump}")))
}

/// Validation losses: reconstruction NLL and KL with `z = mu` and clean
/// decoder inputs, averaged per sentence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub loss: f64,
    pub recon: f64,
    pub kl: f64,
}

pub fn validate(model: &ModelState, examples: &[LabeledExample], batch_size: usize) -> Result<Validation> {
    if examples.is_empty() {
        return Err(Error::InsufficientData("empty validation set".into()));
    }
    let w = model.frozen();
    let (mut recon, mut kl) = (0.0, 0.0);
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&LabeledExample> = chunk.iter().collect();
        let batch = Batch::new(&refs, model.dtype())?;
        let (mu, lv) = w.encode(&batch.tokens, &batch.mask)?;
        let inputs = ids_tensor(&batch.decoder_inputs())?;
        let logits = w.decode_teacher_forced(&mu, &batch.attrs, &inputs)?;
        let (targets, tmask) = batch.targets()?;
        let n = chunk.len() as f64;
        recon += scalar(&reconstruction_nll(&logits, &targets, &tmask)?)? * n;
        kl += scalar(&gaussian_kl(&mu, &lv)?)? * n;
    }
    let n = examples.len() as f64;
    Ok(Validation {
        loss: (recon + kl) / n,
        recon: recon / n,
        kl: kl / n,
    })
}

/// Order of training examples in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::substream(seed, &format!("shuffle/{epoch}")));
    order
}

pub const METRICS_HEADER: &str = "step,recon,kl,lambda_kl,disc,ctx,zeta,lambda_disc,total";

pub fn metrics_row(step: u64, l: &LossBreakdown) -> String {
    format!(
        "{step},{},{},{},{},{},{},{},{}",
        l.recon_nll, l.kl, l.lambda_kl, l.disc, l.ctx, l.zeta, l.lambda_disc, l.total_generator
    )
}

/// Where and how often `train` persists its progress.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory for `metrics.csv`, `validation.csv` and checkpoints.
    pub out_dir: Option<PathBuf>,
    /// Stop (after checkpointing) once this many steps have completed.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub losses: Vec<LossBreakdown>,
    pub validations: Vec<(u64, Validation)>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    pub interrupted: bool,
}

fn append_line(path: &Path, header: &str, line: &str) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Runs (or resumes) training until `cfg.epochs` epochs are complete.
pub fn train(
    state: &mut TrainState,
    train_set: &[LabeledExample],
    valid_set: &[LabeledExample],
    cfg: &TrainConfig,
    sched: &ScheduleConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.validate()?;
    sched.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut report = TrainReport::default();
    let out = |name: &str| opts.out_dir.as_ref().map(|d| d.join(name));
    let batches_per_epoch = train_set.len().div_ceil(cfg.batch_size) as u64;
    while state.epoch < cfg.epochs {
        let order = epoch_order(train_set.len(), state.seed, state.epoch);
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        while state.batch_in_epoch < batches_per_epoch {
            let idx = chunks[state.batch_in_epoch as usize];
            let refs: Vec<&LabeledExample> = idx.iter().map(|&i| &train_set[i]).collect();
            let batch = Batch::new(&refs, state.model.dtype())?;
            let losses = train_step(state, &batch, cfg, sched)?;
            state.batch_in_epoch += 1;
            if let Some(p) = out("metrics.csv") {
                append_line(&p, METRICS_HEADER, &metrics_row(state.step, &losses))?;
            }
            log::debug!("step {} total {:.4}", state.step, losses.total_generator);
            report.losses.push(losses);
            if opts.stop_after.is_some_and(|s| state.step >= s) {
                if let Some(p) = out("last.ckpt") {
                    save_checkpoint(state, &p)?;
                    report.last_checkpoint = Some(p);
                }
                report.interrupted = true;
                return Ok(report);
            }
        }
        let val = if valid_set.is_empty() {
            None
        } else {
            Some(validate(&state.model, valid_set, cfg.batch_size)?)
        };
        state.epoch += 1;
        state.batch_in_epoch = 0;
        if let Some(v) = val {
            log::info!("epoch {} step {} val loss {:.4} recon {:.4}", state.epoch, state.step, v.loss, v.recon);
            report.validations.push((state.epoch, v));
            if let Some(p) = out("validation.csv") {
                append_line(
                    &p,
                    "epoch,step,loss,recon,kl",
                    &format!("{},{},{},{},{}", state.epoch, state.step, v.loss, v.recon, v.kl),
                )?;
            }
            if state.best_val.is_none_or(|b| v.loss < b) {
                state.best_val = Some(v.loss);
                if let Some(p) = out("best.ckpt") {
                    save_checkpoint(state, &p)?;
                    report.best_checkpoint = Some(p);
                }
            }
        }
        if let Some(p) = out("last.ckpt") {
            save_checkpoint(state, &p)?;
            report.last_checkpoint = Some(p);
        }
    }
    if !state.model.params.all_finite()? {
        return Err(Error::NonFinite("parameters after training".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_corpus, AttributeSchema, Vocabulary};
    use crate::model::{CellType, DiscriminatorKind};

    pub(crate) fn toy_setup(n: usize) -> (Vec<LabeledExample>, ModelConfig, CheckpointMeta) {
        let schema = AttributeSchema::toy();
        let corpus = generate_toy_corpus(n, &schema, 1).unwrap();
        let vocab = Vocabulary::build(&corpus.token_lists(), 1).unwrap();
        let ex = corpus.encode(&vocab, 20).unwrap();
        let cfg = ModelConfig {
            vocab_size: vocab.len(),
            emb_dim: 8,
            hidden_dim: 12,
            latent_dim: 6,
            attr_cardinalities: schema.cardinalities(),
            cell: CellType::Gru,
            discriminator: DiscriminatorKind::Mlp,
            disc_hidden: 8,
            freeze_embeddings: false,
        };
        let meta = CheckpointMeta { schema, vocab, run_config: String::new() };
        (ex, cfg, meta)
    }

    fn sched_active() -> ScheduleConfig {
        ScheduleConfig {
            wd_k1: 0.3,
            wd_tau: 10,
            wd_warmup: 5,
            kl_x0: 5,
            kl_eps: 1e-4,
            kl_steps: None,
            disc_t: 2.0,
            disc_x0: 4,
            disc_k1: 1,
            ctx_weight: 0.5,
        }
    }

    fn hash(model: &ModelState, prefixes: &[&str]) -> Vec<Vec<f32>> {
        model
            .params
            .group(prefixes)
            .iter()
            .map(|(_, v)| v.as_tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap())
            .collect()
    }

    #[test]
    fn step_counter_and_alternation() {
        let (ex, cfg, meta) = toy_setup(16);
        let tc = TrainConfig { batch_size: 8, ..TrainConfig::default() };
        let mut st = TrainState::new(cfg, meta, &tc, 0).unwrap();
        st.step = 3;
        let refs: Vec<&LabeledExample> = ex.iter().take(8).collect();
        let batch = Batch::new(&refs, DType::F32).unwrap();
        let gen_before = hash(&st.model, &["emb.", "enc.", "dec."]);
        let disc_before = hash(&st.model, &["disc."]);
        let l = train_step(&mut st, &batch, &tc, &sched_active()).unwrap();
        assert_eq!(st.step, 4);
        assert!(l.lambda_disc > 0.0);
        assert_ne!(hash(&st.model, &["emb.", "enc.", "dec."]), gen_before);
        assert_ne!(hash(&st.model, &["disc."]), disc_before);
    }

    #[test]
    fn discriminator_half_step_is_detached() {
        let (ex, cfg, meta) = toy_setup(8);
        let st = TrainState::new(cfg, meta, &TrainConfig::default(), 0).unwrap();
        let refs: Vec<&LabeledExample> = ex.iter().collect();
        let batch = Batch::new(&refs, DType::F32).unwrap();
        let frozen = st.model.frozen();
        let (mu, _) = frozen.encode(&batch.tokens, &batch.mask).unwrap();
        let w = st.model.weights();
        let loss = discriminator_loss(&w.discriminate(&mu).unwrap(), &batch.label_tensor).unwrap();
        let grads = loss.backward().unwrap();
        for (name, var) in st.model.params.iter() {
            let g = grads.get(var.as_tensor());
            if name.starts_with("disc.") {
                assert!(g.is_some(), "{name}");
            } else if let Some(g) = g {
                let s: f32 = g.abs().unwrap().sum_all().unwrap().to_scalar().unwrap();
                assert_eq!(s, 0.0, "{name}");
            }
        }
    }

    #[test]
    fn pure_vae_step_when_weights_off() {
        // With both extra weights at zero, the generator gradient equals the
        // gradient of recon + lambda_kl * kl alone.
        let (ex, cfg, meta) = toy_setup(8);
        let st = TrainState::new(cfg, meta, &TrainConfig::default(), 2).unwrap();
        let refs: Vec<&LabeledExample> = ex.iter().collect();
        let batch = Batch::new(&refs, DType::F32).unwrap();
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(0);
        let (noise, dec_inputs) = draw_step_inputs(&mut rng, &batch, 6, 0.0, DType::F32).unwrap();
        let w = st.model.weights();
        let z_back = Some(back_encode(&st.model.frozen(), &noise, &batch.attrs, 20).unwrap());
        let inputs = StepInputs { noise, dec_inputs, z_back };
        let off = Lambdas { kl: 0.3, ctx: 0.0, disc: 0.0 };
        let full = generator_loss(&w, &batch, &inputs, off, AdversarialMode::Confusion).unwrap();
        let g1 = full.total.backward().unwrap();
        let w2 = st.model.weights();
        let plain = generator_loss(&w2, &batch, &StepInputs { z_back: None, ..inputs }, off, AdversarialMode::Literal).unwrap();
        let vae = (plain.recon + plain.kl.affine(0.3, 0.0).unwrap()).unwrap();
        let g2 = vae.backward().unwrap();
        for (name, var) in st.model.params.group(&["emb.", "enc.", "dec."]) {
            let a: Vec<f32> = g1.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            let b: Vec<f32> = g2.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-6, "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 1, 0);
        assert_eq!(a, epoch_order(50, 1, 0));
        assert_ne!(a, epoch_order(50, 1, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn short_run_is_deterministic() {
        let (ex, cfg, meta) = toy_setup(40);
        let tc = TrainConfig { batch_size: 8, epochs: 2, ..TrainConfig::default() };
        let run = || {
            let mut st = TrainState::new(cfg.clone(), meta.clone(), &tc, 5).unwrap();
            let r = train(&mut st, &ex[..32], &ex[32..], &tc, &sched_active(), &TrainOptions::default()).unwrap();
            r.losses.iter().map(|l| metrics_row(0, l)).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), 8);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let tc = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(tc.validate().is_err());
        let tc = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(tc.validate().is_err());
    }
}
