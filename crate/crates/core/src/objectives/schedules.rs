use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EOS, PAD, SOS, UNK};
use crate::error::{Error, Result};

/// Annealing, ramp and dropout schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Word-dropout rate held during warm-up.
    pub wd_k1: f64,
    /// Period of the cyclical word-dropout rate.
    pub wd_tau: u64,
    pub wd_warmup: u64,
    /// KL logistic midpoint.
    pub kl_x0: u64,
    pub kl_eps: f64,
    /// Step budget of the KL ramp; `None` means `2 * kl_x0`.
    #[serde(default)]
    pub kl_steps: Option<u64>,
    /// Saturation value of the discriminator weight.
    pub disc_t: f64,
    /// Length of the discriminator ramp.
    pub disc_x0: u64,
    /// Last step at which the discriminator weight is zero.
    pub disc_k1: u64,
    pub ctx_weight: f64,
}

impl ScheduleConfig {
    pub fn yelp() -> Self {
        Self {
            wd_k1: 0.6,
            wd_tau: 500,
            wd_warmup: 7000,
            kl_x0: 1000,
            kl_eps: 1e-4,
            kl_steps: None,
            disc_t: 20.0,
            disc_x0: 6000,
            disc_k1: 12000,
            ctx_weight: 0.5,
        }
    }

    pub fn imdb() -> Self {
        Self {
            wd_tau: 250,
            wd_warmup: 4000,
            kl_x0: 5000,
            disc_x0: 3000,
            disc_k1: 5000,
            ..Self::yelp()
        }
    }

    /// Short-horizon schedule for the toy grammar (a few thousand steps).
    pub fn toy() -> Self {
        Self {
            wd_k1: 0.9,
            wd_tau: 2000,
            wd_warmup: 2500,
            kl_x0: 1500,
            disc_t: 5.0,
            disc_x0: 500,
            disc_k1: 500,
            ..Self::yelp()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(format!("schedule.{key}"), msg));
        if !(0.0..=1.0).contains(&self.wd_k1) {
            return bad("wd_k1", "must be in [0, 1]");
        }
        for (key, v) in [
            ("wd_tau", self.wd_tau),
            ("wd_warmup", self.wd_warmup),
            ("kl_x0", self.kl_x0),
            ("disc_x0", self.disc_x0),
            ("disc_k1", self.disc_k1),
        ] {
            if v == 0 {
                return bad(key, "must be > 0");
            }
        }
        if self.kl_steps == Some(0) {
            return bad("kl_steps", "must be > 0");
        }
        if !(self.kl_eps > 0.0 && self.kl_eps < 0.5) {
            return bad("kl_eps", "must be in (0, 0.5)");
        }
        if !(self.disc_t >= 0.0 && self.disc_t.is_finite()) {
            return bad("disc_t", "must be finite and >= 0");
        }
        if !(self.ctx_weight >= 0.0 && self.ctx_weight.is_finite()) {
            return bad("ctx_weight", "must be finite and >= 0");
        }
        Ok(())
    }

    /// Logistic steepness `K`.
    pub fn kl_steepness(&self) -> f64 {
        let steps = self.kl_steps.unwrap_or(2 * self.kl_x0) as f64;
        let eps = self.kl_eps;
        -(-1.0 + 1.0 / (1.0 - eps)).ln() / (0.5 * steps)
    }
}

/// Logistic KL weight `1 / (1 + exp(-K (step - x0)))`.
pub fn kl_weight(step: u64, cfg: &ScheduleConfig) -> f64 {
    let k = cfg.kl_steepness();
    1.0 / (1.0 + (-k * (step as f64 - cfg.kl_x0 as f64)).exp())
}

/// Cyclical word-dropout rate: `k1` during warm-up, then `max(0, cos(2 pi s / tau))`.
pub fn word_dropout_rate(step: u64, cfg: &ScheduleConfig) -> f64 {
    if step <= cfg.wd_warmup {
        cfg.wd_k1
    } else {
        let phase = (step % cfg.wd_tau) as f64 / cfg.wd_tau as f64;
        (2.0 * std::f64::consts::PI * phase).cos().max(0.0)
    }
}

/// Piecewise-linear discriminator weight: zero until `k1`, then a ramp
/// saturating at `t` after `x0` more steps.
pub fn discriminator_weight(step: u64, cfg: &ScheduleConfig) -> f64 {
    if step <= cfg.disc_k1 {
        0.0
    } else {
        let ramp = cfg.disc_t / cfg.disc_x0 as f64 * (step - cfg.disc_k1) as f64;
        ramp.min(cfg.disc_t)
    }
}

/// Replaces each content token with UNK with probability `rate`.
pub fn apply_word_dropout<R: Rng + ?Sized>(tokens: &[u32], rate: f64, rng: &mut R) -> Vec<u32> {
    tokens
        .iter()
        .map(|&t| {
            if t == SOS || t == EOS || t == PAD {
                t
            } else if rng.random::<f64>() < rate {
                UNK
            } else {
                t
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn anchors() {
        let y = ScheduleConfig::yelp();
        assert_eq!(word_dropout_rate(1000, &y), 0.6);
        assert_abs_diff_eq!(word_dropout_rate(7125, &y), 0.0, epsilon = 1e-12);
        assert_eq!(word_dropout_rate(7250, &y), 0.0);
        assert_eq!(word_dropout_rate(7500, &y), 1.0);
        assert_eq!(discriminator_weight(10000, &y), 0.0);
        assert_eq!(discriminator_weight(18000, &y), 20.0);
        assert_abs_diff_eq!(discriminator_weight(15000, &y), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(kl_weight(1000, &y), 0.5, epsilon = 1e-15);
        assert!(kl_weight(0, &y) < 0.01);
        assert_abs_diff_eq!(kl_weight(2000, &y), 1.0 - 1e-4, epsilon = 1e-12);
    }

    #[test]
    fn imdb_profile() {
        let i = ScheduleConfig::imdb();
        assert_eq!((i.wd_tau, i.wd_warmup, i.kl_x0, i.disc_x0, i.disc_k1), (250, 4000, 5000, 3000, 5000));
        assert_eq!(i.wd_k1, 0.6);
        i.validate().unwrap();
    }

    #[test]
    fn dropout_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let toks = [SOS, 7, 8, 9, EOS, PAD];
        assert_eq!(apply_word_dropout(&toks, 0.0, &mut rng), toks);
        assert_eq!(apply_word_dropout(&toks, 1.0, &mut rng), [SOS, UNK, UNK, UNK, EOS, PAD]);
    }

    #[test]
    fn dropout_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let toks = vec![9u32; 1000];
        for _ in 0..20 {
            let out = apply_word_dropout(&toks, 0.6, &mut rng);
            let frac = out.iter().filter(|&&t| t == UNK).count() as f64 / 1000.0;
            assert!((frac - 0.6).abs() <= 0.05, "{frac}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = ScheduleConfig::yelp();
        c.wd_k1 = 1.5;
        assert!(c.validate().is_err());
        let mut c = ScheduleConfig::yelp();
        c.disc_t = -1.0;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn kl_monotone(a in 0u64..20000, b in 0u64..20000) {
            let y = ScheduleConfig::yelp();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(kl_weight(lo, &y) <= kl_weight(hi, &y));
        }

        #[test]
        fn rates_in_range(s in 0u64..100000) {
            let y = ScheduleConfig::yelp();
            let z = word_dropout_rate(s, &y);
            prop_assert!((0.0..=1.0).contains(&z));
            let d = discriminator_weight(s, &y);
            prop_assert!((0.0..=y.disc_t).contains(&d));
        }

        #[test]
        fn wd_periodic(s in 7001u64..50000) {
            let y = ScheduleConfig::yelp();
            prop_assert_eq!(word_dropout_rate(s, &y), word_dropout_rate(s + y.wd_tau, &y));
        }

        #[test]
        fn disc_single_knee(s in 12001u64..17999) {
            let y = ScheduleConfig::yelp();
            let slope = discriminator_weight(s + 1, &y) - discriminator_weight(s, &y);
            prop_assert!((slope - 20.0 / 6000.0).abs() < 1e-9);
            prop_assert_eq!(discriminator_weight(s + 7000, &y), 20.0);
        }
    }
}
