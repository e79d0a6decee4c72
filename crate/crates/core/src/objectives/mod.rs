//! Loss terms and training schedules.
//!
//! Tensor losses take a leading batch dimension, sum over tokens or latent
//! dimensions and average over the batch, returning a scalar tensor.

mod schedules;

use candle_core::{DType, Tensor, D};
use candle_nn::ops::log_softmax;
use serde::{Deserialize, Serialize};

pub use schedules::{
    apply_word_dropout, discriminator_weight, kl_weight, word_dropout_rate, ScheduleConfig,
};

use crate::error::{Error, Result};

/// How the generator uses the discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialMode {
    /// Push every head towards the uniform distribution.
    #[default]
    Confusion,
    /// Maximize the discriminator loss directly.
    Literal,
}

/// Scalar values of every loss term for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon_nll: f64,
    pub kl: f64,
    pub kl_weighted: f64,
    pub disc: f64,
    pub disc_adversarial: f64,
    pub ctx: f64,
    pub total_generator: f64,
    pub total_discriminator: f64,
    pub lambda_kl: f64,
    pub lambda_disc: f64,
    pub zeta: f64,
}

fn batch_mean(per_example: &Tensor) -> Result<Tensor> {
    Ok(per_example.mean(0)?)
}

/// KL divergence of a diagonal Gaussian from the standard normal.
pub fn gaussian_kl(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    check_same(mu, logvar, "gaussian_kl")?;
    let per = ((mu.sqr()? + logvar.exp()?)? - logvar)?
        .affine(0.5, -0.5)?
        .sum(D::Minus1)?;
    batch_mean(&per)
}

/// Negative log-likelihood of `targets` under `logits` (`[B, T, V]`), with
/// positions where `mask` is 0 excluded.
pub fn reconstruction_nll(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let (b, t, _) = logits.dims3()?;
    if targets.dims() != [b, t] || mask.dims() != [b, t] {
        return Err(Error::InvalidInput(format!(
            "reconstruction_nll: logits {:?} vs targets {:?} / mask {:?}",
            logits.dims(),
            targets.dims(),
            mask.dims()
        )));
    }
    let logp = log_softmax(logits, D::Minus1)?;
    let picked = logp
        .gather(&targets.to_dtype(DType::U32)?.contiguous()?.unsqueeze(2)?, 2)?
        .squeeze(2)?;
    let per = (picked * mask.to_dtype(logits.dtype())?)?.sum(1)?.neg()?;
    batch_mean(&per)
}

/// `sum_k -log p_k(a_k)` from per-attribute log-probabilities and a
/// `[B, K]` u32 label tensor.
pub fn discriminator_loss(log_probs: &[Tensor], labels: &Tensor) -> Result<Tensor> {
    let (_, k) = labels.dims2()?;
    if k != log_probs.len() {
        return Err(Error::InvalidInput(format!(
            "discriminator_loss: {} heads for {k} attributes",
            log_probs.len()
        )));
    }
    let mut per: Option<Tensor> = None;
    for (i, lp) in log_probs.iter().enumerate() {
        let idx = labels.narrow(1, i, 1)?.contiguous()?;
        let term = lp.gather(&idx, 1)?.squeeze(1)?.neg()?;
        per = Some(match per {
            Some(p) => (p + term)?,
            None => term,
        });
    }
    let per = per.ok_or_else(|| Error::InvalidInput("no discriminator heads".into()))?;
    batch_mean(&per)
}

/// `sum_k mean_v -log p_k(v)`: cross-entropy of every head against uniform.
pub fn confusion_loss(log_probs: &[Tensor]) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for lp in log_probs {
        let term = lp.mean(1)?.neg()?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    let per = total.ok_or_else(|| Error::InvalidInput("no discriminator heads".into()))?;
    batch_mean(&per)
}

/// Term subtracted (scaled by the discriminator weight) from the generator
/// objective.
pub fn adversarial_term(log_probs: &[Tensor], labels: &Tensor, mode: AdversarialMode) -> Result<Tensor> {
    match mode {
        AdversarialMode::Literal => discriminator_loss(log_probs, labels),
        AdversarialMode::Confusion => Ok(confusion_loss(log_probs)?.neg()?),
    }
}

/// L1 distance between a code and the code of its reconstruction.
pub fn context_loss(z: &Tensor, z_back: &Tensor) -> Result<Tensor> {
    check_same(z, z_back, "context_loss")?;
    batch_mean(&(z - z_back)?.abs()?.sum(D::Minus1)?)
}

/// `recon + l_kl*kl + l_ctx*ctx - l_disc*disc_adv`.
pub fn total_generator_loss(
    recon_nll: f64,
    kl: f64,
    ctx: f64,
    disc_adv: f64,
    lambda_kl: f64,
    lambda_ctx: f64,
    lambda_disc: f64,
) -> Result<f64> {
    let inputs = [recon_nll, kl, ctx, disc_adv, lambda_kl, lambda_ctx, lambda_disc];
    if let Some(bad) = inputs.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("total_generator_loss input {bad}")));
    }
    Ok(recon_nll + lambda_kl * kl + lambda_ctx * ctx - lambda_disc * disc_adv)
}

/// Tensor form of [`total_generator_loss`].
pub fn combine_generator_loss(
    recon: &Tensor,
    kl: &Tensor,
    ctx: Option<&Tensor>,
    disc_adv: Option<&Tensor>,
    lambda_kl: f64,
    lambda_ctx: f64,
    lambda_disc: f64,
) -> Result<Tensor> {
    let mut total = (recon + kl.affine(lambda_kl, 0.0)?)?;
    if let Some(ctx) = ctx {
        total = (total + ctx.affine(lambda_ctx, 0.0)?)?;
    }
    if let Some(adv) = disc_adv {
        total = (total - adv.affine(lambda_disc, 0.0)?)?;
    }
    Ok(total)
}

fn check_same(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::InvalidInput(format!(
            "{op}: shape {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Reads a scalar tensor as f64.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use candle_core::Device;

    fn t(rows: &[&[f64]]) -> Tensor {
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(flat, (rows.len(), rows[0].len()), &Device::Cpu).unwrap()
    }

    #[test]
    fn kl_examples() {
        let s = |m: &[f64], l: &[f64]| scalar(&gaussian_kl(&t(&[m]), &t(&[l])).unwrap()).unwrap();
        assert_eq!(s(&[0.0], &[0.0]), 0.0);
        assert_abs_diff_eq!(s(&[1.0], &[0.0]), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s(&[0.0], &[1.0]), 0.35914, epsilon = 1e-5);
        assert!(gaussian_kl(&t(&[&[0.0, 1.0]]), &t(&[&[0.0]])).is_err());
    }

    #[test]
    fn nll_examples() {
        let dev = Device::Cpu;
        let logits = Tensor::zeros((1, 2, 4), DType::F64, &dev).unwrap();
        let targets = Tensor::new(&[[1u32, 3]], &dev).unwrap();
        let mask = Tensor::ones((1, 2), DType::F64, &dev).unwrap();
        let v = scalar(&reconstruction_nll(&logits, &targets, &mask).unwrap()).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 2.77259, epsilon = 1e-5);

        let padded_mask = Tensor::new(&[[1.0f64, 0.0]], &dev).unwrap();
        let v = scalar(&reconstruction_nll(&logits, &targets, &padded_mask).unwrap()).unwrap();
        assert_abs_diff_eq!(v, 4f64.ln(), epsilon = 1e-12);

        let peaked = Tensor::new(&[[[0.0f64, 50.0, 0.0, 0.0], [0.0, 0.0, 0.0, 50.0]]], &dev).unwrap();
        let v = scalar(&reconstruction_nll(&peaked, &targets, &mask).unwrap()).unwrap();
        assert!(v < 1e-12);

        let short = Tensor::new(&[[1u32]], &dev).unwrap();
        assert!(reconstruction_nll(&logits, &short, &mask).is_err());
    }

    #[test]
    fn discriminator_examples() {
        let dev = Device::Cpu;
        let uniform = t(&[&[0.5f64.ln(), 0.5f64.ln()]]);
        let labels = Tensor::new(&[[0u32, 1]], &dev).unwrap();
        let v = scalar(&discriminator_loss(&[uniform.clone(), uniform], &labels).unwrap()).unwrap();
        assert_abs_diff_eq!(v, 1.38629, epsilon = 1e-5);

        let sure = t(&[&[0.0, f64::NEG_INFINITY]]);
        let labels1 = Tensor::new(&[[0u32]], &dev).unwrap();
        assert_eq!(scalar(&discriminator_loss(&[sure], &labels1).unwrap()).unwrap(), 0.0);

        let p = t(&[&[0.8f64.ln(), 0.2f64.ln()]]);
        let v = scalar(&discriminator_loss(&[p], &labels1).unwrap()).unwrap();
        assert_abs_diff_eq!(v, 0.22314, epsilon = 1e-5);
    }

    #[test]
    fn context_examples() {
        let z = t(&[&[1.0, -2.0, 3.0]]);
        let zero = t(&[&[0.0, 0.0, 0.0]]);
        assert_eq!(scalar(&context_loss(&z, &z).unwrap()).unwrap(), 0.0);
        assert_eq!(scalar(&context_loss(&z, &zero).unwrap()).unwrap(), 6.0);
    }

    #[test]
    fn total_examples() {
        let v = total_generator_loss(2.0, 1.0, 1.0, 1.38629, 1.0, 0.5, 3.0).unwrap();
        assert_abs_diff_eq!(v, -0.65887, epsilon = 1e-5);
        assert_eq!(total_generator_loss(2.0, 1.0, 1.0, 1.38629, 0.0, 0.0, 0.0).unwrap(), 2.0);
        assert!(total_generator_loss(f64::NAN, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn total_linear_in_each_weight() {
        let f = |lk: f64, lc: f64, ld: f64| total_generator_loss(3.0, 0.7, 1.3, 2.1, lk, lc, ld).unwrap();
        for (a, b, c) in [
            (f(0.0, 0.5, 1.0), f(1.0, 0.5, 1.0), f(2.0, 0.5, 1.0)),
            (f(1.0, 0.0, 1.0), f(1.0, 1.0, 1.0), f(1.0, 2.0, 1.0)),
            (f(1.0, 0.5, 0.0), f(1.0, 0.5, 1.0), f(1.0, 0.5, 2.0)),
        ] {
            assert_abs_diff_eq!(b - a, c - b, epsilon = 1e-12);
        }
    }

    #[test]
    fn confusion_prefers_uncertain_discriminator() {
        // The generator's objective must drop as the discriminator loses confidence.
        let dev = Device::Cpu;
        let labels = Tensor::new(&[[0u32]], &dev).unwrap();
        let gen_obj = |p: f64, mode| {
            let lp = t(&[&[p.ln(), (1.0 - p).ln()]]);
            -scalar(&adversarial_term(&[lp], &labels, mode).unwrap()).unwrap()
        };
        for mode in [AdversarialMode::Confusion, AdversarialMode::Literal] {
            assert!(gen_obj(0.9, mode) > gen_obj(0.7, mode));
        }
        assert!(gen_obj(0.7, AdversarialMode::Confusion) > gen_obj(0.5, AdversarialMode::Confusion));
        let disc = |p: f64| scalar(&discriminator_loss(&[t(&[&[p.ln(), (1.0 - p).ln()]])], &labels).unwrap()).unwrap();
        assert!(disc(0.9) < disc(0.7));
    }
}
