//! Forward-backward diffusion on a symmetric two-mode Gaussian mixture
//! `q(x) = ½ N(μ, σ² I) + ½ N(-μ, σ² I)`, denoised with the exact score.
//!
//! The mixture has a class (the mode) but no hierarchy: inverting the
//! diffusion at late times flips the mode, and there is no lower-level
//! structure that could survive the flip.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{stream_rng, value_key, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

impl MixtureParams {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidParams("mixture dimension must be >= 1".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParams(format!("sigma must be > 0 (got {sigma})")));
        }
        Ok(MixtureParams { mu, sigma })
    }

    /// `μ = (1, ..., 1)`.
    pub fn ones(d: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![1.0; d], sigma)
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }
}

/// Discrete variance schedule `β_1..β_T` with `ᾱ_t = Π_{τ<=t} (1 - β_τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSchedule {
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiscreteSchedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidParams("betas must be non-empty and lie in (0, 1)".into()));
        }
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for &b in &betas {
            alpha_bar.push(alpha_bar.last().unwrap() * (1.0 - b));
        }
        Ok(DiscreteSchedule { betas, alpha_bar })
    }

    /// `T` steps, β linear from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        let betas = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::new(betas)
    }

    /// T = 1000, β from 1e-4 to 0.02.
    pub fn ddpm_default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t` for `t` in `0..=T`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }
}

/// Compensated (Neumaier) dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Draws the mode with probability ½, then `N(±μ, σ² I)`.
pub fn mixture_sample<R: Rng + ?Sized>(params: &MixtureParams, rng: &mut R) -> Vec<f64> {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    params
        .mu
        .iter()
        .map(|&m| sign * m + params.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Variance of each mode after diffusing to `t`.
fn mode_variance(params: &MixtureParams, ab: f64) -> f64 {
    ab * params.sigma * params.sigma + 1.0 - ab
}

/// Exact score of the diffused mixture,
/// `-x/c + μ √ᾱ/c · tanh(√ᾱ x·μ / c)` with `c = ᾱσ² + 1 - ᾱ`.
pub fn score(x: &[f64], t: usize, params: &MixtureParams, schedule: &DiscreteSchedule) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    score_into(x, t, params, schedule, &mut out);
    out
}

fn score_into(x: &[f64], t: usize, params: &MixtureParams, schedule: &DiscreteSchedule, out: &mut [f64]) {
    let ab = schedule.alpha_bar(t);
    let c = mode_variance(params, ab);
    let a = ab.sqrt() / c;
    let g = (a * dot(x, &params.mu)).tanh();
    for ((o, &xi), &mi) in out.iter_mut().zip(x).zip(&params.mu) {
        *o = -xi / c + mi * a * g;
    }
}

/// `log q_t(x)` in closed form.
pub fn log_density(x: &[f64], t: usize, params: &MixtureParams, schedule: &DiscreteSchedule) -> f64 {
    let ab = schedule.alpha_bar(t);
    let c = mode_variance(params, ab);
    let d = x.len() as f64;
    let z = ab.sqrt() * dot(x, &params.mu) / c;
    let log_cosh = z.abs() + (-2.0 * z.abs()).exp().ln_1p() - std::f64::consts::LN_2;
    -0.5 * d * (2.0 * std::f64::consts::PI * c).ln() - (dot(x, x) + ab * dot(&params.mu, &params.mu)) / (2.0 * c)
        + log_cosh
}

/// `x_t = √ᾱ_t x_0 + √(1 - ᾱ_t) η`.
pub fn forward<R: Rng + ?Sized>(x0: &[f64], t: usize, schedule: &DiscreteSchedule, rng: &mut R) -> Vec<f64> {
    if t == 0 {
        return x0.to_vec();
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.iter().map(|&x| a * x + b * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One reverse step `x_{t-1} = (x_t + β_t ∇log q_t(x_t)) / √(1 - β_t) + √β_t z`.
pub fn backward_step<R: Rng + ?Sized>(
    x: &[f64],
    t: usize,
    params: &MixtureParams,
    schedule: &DiscreteSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = x.to_vec();
    let mut scratch = vec![0.0; x.len()];
    backward_step_in_place(&mut out, t, params, schedule, &mut scratch, rng);
    out
}

fn backward_step_in_place<R: Rng + ?Sized>(
    x: &mut [f64],
    t: usize,
    params: &MixtureParams,
    schedule: &DiscreteSchedule,
    scratch: &mut [f64],
    rng: &mut R,
) {
    let beta = schedule.beta(t);
    score_into(x, t, params, schedule, scratch);
    let scale = 1.0 / (1.0 - beta).sqrt();
    let noise = beta.sqrt();
    for (xi, &si) in x.iter_mut().zip(scratch.iter()) {
        *xi = (*xi + beta * si) * scale + noise * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Runs the reverse chain from `x_t` down to `x_0`.
pub fn backward_from<R: Rng + ?Sized>(
    mut x: Vec<f64>,
    t: usize,
    params: &MixtureParams,
    schedule: &DiscreteSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let mut scratch = vec![0.0; x.len()];
    for tau in (1..=t).rev() {
        backward_step_in_place(&mut x, tau, params, schedule, &mut scratch, rng);
    }
    x
}

/// A fresh sample: reverse chain from `x_T ~ N(0, I)`.
pub fn generate<R: Rng + ?Sized>(params: &MixtureParams, schedule: &DiscreteSchedule, rng: &mut R) -> Vec<f64> {
    let x: Vec<f64> = (0..params.d()).map(|_| rng.sample(StandardNormal)).collect();
    backward_from(x, schedule.steps(), params, schedule, rng)
}

/// Sign of the projection on μ, the sample's mode.
pub fn mode_of(x: &[f64], params: &MixtureParams) -> bool {
    dot(x, &params.mu) > 0.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEstimate {
    pub t_invert: usize,
    pub t_over_t_max: f64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_trials: usize,
}

/// Wilson score interval at z = 1.96.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let center = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fraction of trials whose mode changes after diffusing a fresh mixture
/// sample to `t_invert` and running the exact reverse chain back to 0.
/// Trial `k` uses the stream `(seed, t_invert, k)`.
pub fn mode_flip_rate(
    t_invert: usize,
    params: &MixtureParams,
    schedule: &DiscreteSchedule,
    n_trials: usize,
    seed: u64,
) -> FlipEstimate {
    assert!(t_invert <= schedule.steps(), "t_invert beyond T");
    let key = value_key(Domain::Gaussian, t_invert as f64);
    let flips: usize = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, key, k as u64);
            let x0 = mixture_sample(params, &mut rng);
            let xt = forward(&x0, t_invert, schedule, &mut rng);
            let x_hat = backward_from(xt, t_invert, params, schedule, &mut rng);
            usize::from(mode_of(&x0, params) != mode_of(&x_hat, params))
        })
        .sum();
    let (ci_low, ci_high) = wilson_interval(flips, n_trials);
    FlipEstimate {
        t_invert,
        t_over_t_max: t_invert as f64 / schedule.steps() as f64,
        rate: flips as f64 / n_trials as f64,
        ci_low,
        ci_high,
        n_trials,
    }
}
