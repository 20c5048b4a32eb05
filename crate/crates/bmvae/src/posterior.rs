//! Latent posteriors: factorized Bernoulli over ±1 spins (the
//! Boltzmann-prior model) and diagonal Gaussian (the baseline), plus the
//! reconstruction loss. Gradients here are analytic and covered by
//! finite-difference tests.

use crate::error::{Error, Result};
use crate::machine::{BoltzmannMachine, SpinConfig};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Shared sign convention: zero maps to +1. Every place a real vector is
/// binarized into spins goes through this function.
pub fn sign_spin(x: f64) -> i8 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// Factorized posterior over spins: `P(z_i = +1) = logistic(mu_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    logits: Vec<f64>,
}

impl PosteriorParams {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidArgument("empty logit vector".into()));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite logit".into()));
        }
        Ok(Self { logits })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// One joint draw: each spin independently +1 with probability
    /// `logistic(mu_i)`.
    pub fn sample(&self, rng: &mut rng::Stream) -> SpinConfig {
        let spins = self
            .logits
            .iter()
            .map(|&mu| if rng.gen::<f64>() < crate::nn::logistic(mu) { 1i8 } else { -1i8 })
            .collect();
        SpinConfig::from_raw(spins)
    }

    /// `<z_i> = 2 logistic(mu_i) - 1 = tanh(mu_i / 2)`.
    pub fn mean(&self) -> Vec<f64> {
        self.logits.iter().map(|&mu| (mu / 2.0).tanh()).collect()
    }

    /// `d<z_i>/dmu_i = (1 - m_i^2) / 2`; also the straight-through factor
    /// used when gradients cross a sampled spin.
    pub fn mean_derivative(&self) -> Vec<f64> {
        self.mean().iter().map(|m| (1.0 - m * m) / 2.0).collect()
    }

    /// Entropy in nats. The `p ln p` terms use a guarded form that returns 0
    /// at p ∈ {0, 1}, so saturated logits contribute exactly zero.
    pub fn entropy(&self) -> f64 {
        fn plogp(p: f64) -> f64 {
            if p <= 0.0 || p >= 1.0 {
                0.0
            } else {
                p * p.ln()
            }
        }
        self.logits
            .iter()
            .map(|&mu| {
                let p = crate::nn::logistic(mu);
                -(plogp(p) + plogp(1.0 - p))
            })
            .sum()
    }

    /// `dS/dmu_i = -mu_i p_i (1 - p_i)`.
    pub fn entropy_logit_gradient(&self) -> Vec<f64> {
        self.logits
            .iter()
            .map(|&mu| {
                let p = crate::nn::logistic(mu);
                -mu * p * (1.0 - p)
            })
            .collect()
    }

    /// Posterior expectation of the prior energy. Independence across spins
    /// factorizes each pair term: `<E> = -sum_{(i,j)} J_ij m_i m_j`.
    pub fn expected_energy(&self, bm: &BoltzmannMachine) -> Result<f64> {
        if self.len() != bm.num_spins() {
            return Err(Error::DimensionMismatch(format!(
                "{} logits for a machine over {} spins",
                self.len(),
                bm.num_spins()
            )));
        }
        let m = self.mean();
        let mut e = 0.0;
        for (&(i, j), &jij) in bm.graph().edges().iter().zip(bm.couplings()) {
            e -= jij * m[i] * m[j];
        }
        Ok(e)
    }

    /// `d<E>/dmu_i = -(sum_j J_ij m_j) (1 - m_i^2) / 2`.
    pub fn expected_energy_logit_gradient(&self, bm: &BoltzmannMachine) -> Result<Vec<f64>> {
        if self.len() != bm.num_spins() {
            return Err(Error::DimensionMismatch("logits/machine spin count".into()));
        }
        let m = self.mean();
        let dm = self.mean_derivative();
        let mut grad = vec![0.0; self.len()];
        for (i, g) in grad.iter_mut().enumerate() {
            let mut field = 0.0;
            for &(j, jij) in &bm.neighbors()[i] {
                field += jij * m[j];
            }
            *g = -field * dm[i];
        }
        Ok(grad)
    }
}

/// Predicted Bernoulli means are clamped to this range inside the loss so
/// saturated outputs cannot produce infinities.
pub const BCE_CLAMP: (f64, f64) = (1e-7, 1.0 - 1e-7);

fn clamp_prediction(v: f64) -> f64 {
    v.clamp(BCE_CLAMP.0, BCE_CLAMP.1)
}

/// Binary cross-entropy `-sum_d x ln xhat + (1-x) ln(1-xhat)`, with xhat
/// clamped away from 0 and 1.
pub fn bce_loss(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::DimensionMismatch(format!(
            "target length {} vs prediction length {}",
            x.len(),
            xhat.len()
        )));
    }
    let mut loss = 0.0;
    for (&t, &p) in x.iter().zip(xhat) {
        let p = clamp_prediction(p);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(loss)
}

/// Gradient of `bce_loss` in the raw predictions. Zero where the clamp is
/// active, matching the piecewise-constant loss there.
pub fn bce_gradient(x: &[f64], xhat: &[f64]) -> Result<Vec<f64>> {
    if x.len() != xhat.len() {
        return Err(Error::DimensionMismatch("target/prediction length".into()));
    }
    Ok(x.iter()
        .zip(xhat)
        .map(|(&t, &p)| {
            if p < BCE_CLAMP.0 || p > BCE_CLAMP.1 {
                0.0
            } else {
                -t / p + (1.0 - t) / (1.0 - p)
            }
        })
        .collect())
}

/// Diagonal Gaussian posterior for the baseline model. Log-variances are
/// clamped to [-10, 10] at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    mean: Vec<f64>,
    log_variance: Vec<f64>,
}

pub const LOG_VARIANCE_CLAMP: (f64, f64) = (-10.0, 10.0);

impl GaussianPosterior {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean length {} vs log-variance length {}",
                mean.len(),
                log_variance.len()
            )));
        }
        if mean.iter().chain(&log_variance).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Gaussian parameter".into()));
        }
        let log_variance = log_variance
            .iter()
            .map(|&v| v.clamp(LOG_VARIANCE_CLAMP.0, LOG_VARIANCE_CLAMP.1))
            .collect();
        Ok(Self { mean, log_variance })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_variance(&self) -> &[f64] {
        &self.log_variance
    }

    /// KL to the standard normal:
    /// `0.5 sum_i exp(lv_i) + mean_i^2 - 1 - lv_i`. Nonnegative, zero only
    /// at the standard normal itself.
    pub fn kl_to_standard(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.log_variance)
            .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
            .sum()
    }

    /// `dKL/dmean_i = mean_i`, `dKL/dlv_i = 0.5 (exp(lv_i) - 1)`.
    pub fn kl_gradients(&self) -> (Vec<f64>, Vec<f64>) {
        let d_mean = self.mean.clone();
        let d_lv = self.log_variance.iter().map(|&lv| 0.5 * (lv.exp() - 1.0)).collect();
        (d_mean, d_lv)
    }

    /// Reparameterized draw `mean + exp(lv/2) * eps` with the noise returned
    /// for the backward pass.
    pub fn reparam_sample(&self, rng: &mut rng::Stream) -> (Vec<f64>, Vec<f64>) {
        let noise: Vec<f64> = (0..self.len()).map(|_| rng.sample(StandardNormal)).collect();
        let z = self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(&noise)
            .map(|((&m, &lv), &e)| m + (lv / 2.0).exp() * e)
            .collect();
        (z, noise)
    }
}
