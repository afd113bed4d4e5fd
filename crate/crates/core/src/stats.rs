//! Goodness-of-fit tests, confidence bands, and seed derivation for the
//! Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{precondition, Result};

/// Smallest expected count allowed in a chi-square bin before pooling.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Bins after pooling.
    pub bins: usize,
}

/// Pearson goodness-of-fit test of `observed` counts against `probs`.
/// Adjacent bins are pooled until each expected count reaches 5.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(precondition("observed counts and probabilities must align"));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(precondition("no observations"));
    }
    let total = total as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        obs += o as f64;
        exp += p * total;
        if exp >= MIN_EXPECTED {
            pooled.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => pooled.push((obs, exp)),
        }
    }
    let statistic: f64 = pooled.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    };
    Ok(ChiSquare {
        statistic,
        dof,
        p_value,
        bins: pooled.len(),
    })
}

/// Half-width of the Dvoretzky–Kiefer–Wolfowitz band for `m` samples at
/// significance `alpha`.
pub fn dkw_epsilon(m: u64, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

/// Asymptotic Kolmogorov p-value for a one-sample sup-distance `d` over
/// `m` samples, with the Stephens small-sample correction. Conservative
/// for discrete reference laws.
pub fn ks_p_value(d: f64, m: u64) -> f64 {
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided normal quantile for a given confidence level.
pub fn normal_quantile(confidence: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + confidence / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: u64, trials: u64, confidence: f64) -> (f64, f64) {
    let t = trials as f64;
    let p = hits as f64 / t;
    let z = normal_quantile(confidence);
    let denom = 1.0 + z * z / t;
    let centre = (p + z * z / (2.0 * t)) / denom;
    let half = z * (p * (1.0 - p) / t + z * z / (4.0 * t * t)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanVar {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        iter.into_iter().for_each(|v| acc.push(v));
        acc
    }
}
