//! Risk estimators: MSE, SURE with a Monte-Carlo divergence, the
//! two-observation (stochastic ensembling) objective, PURE, and the
//! degrees-of-freedom diagnostics.
//!
//! All quantities are normalized per sample (divided by `N = H*W*C`).

mod denoiser;

pub use denoiser::{BlackBox, BoxBlur3, DenseLinear, Denoiser, Identity, Scaling, ZeroMap};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Default finite-difference step for PURE on the `[0, 1]` scale.
pub const DEFAULT_PURE_EPS: f64 = 1e-3;

/// A decomposed objective value.
///
/// `total = data_fidelity + divergence_term - constant_offset` on both the
/// Gaussian and the Poisson path. `df_mc` is the per-sample divergence
/// estimate itself (the Monte-Carlo degrees of freedom).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub data_fidelity: f64,
    pub divergence_term: f64,
    pub constant_offset: f64,
    pub total: f64,
    pub df_mc: f64,
}

impl RiskEstimate {
    pub fn new(data_fidelity: f64, divergence_term: f64, constant_offset: f64, df_mc: f64) -> Self {
        RiskEstimate {
            data_fidelity,
            divergence_term,
            constant_offset,
            total: data_fidelity + divergence_term - constant_offset,
            df_mc,
        }
    }

    pub fn recompose(&self) -> f64 {
        self.data_fidelity + self.divergence_term - self.constant_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeDistribution {
    StandardNormal,
    Rademacher,
}

/// Random direction used by the divergence estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeVector {
    pub values: Image,
    pub distribution: ProbeDistribution,
    pub seed: u64,
    pub stream: u64,
}

impl ProbeVector {
    pub fn standard_normal(like: &Image, seed: u64) -> Self {
        Self::sample(like, ProbeDistribution::StandardNormal, seed, 0)
    }

    pub fn rademacher(like: &Image, seed: u64) -> Self {
        Self::sample(like, ProbeDistribution::Rademacher, seed, 0)
    }

    /// Probe shaped like `like`, drawn from stream `(seed, stream)`.
    pub fn sample(like: &Image, distribution: ProbeDistribution, seed: u64, stream: u64) -> Self {
        let mut r = rng::stream(seed, stream);
        let values = match distribution {
            ProbeDistribution::StandardNormal => like.map(|_| r.sample::<f64, _>(StandardNormal)),
            ProbeDistribution::Rademacher => like.map(|_| if r.gen_bool(0.5) { 1.0 } else { -1.0 }),
        };
        ProbeVector {
            values,
            distribution,
            seed,
            stream,
        }
    }

    fn expect(&self, distribution: ProbeDistribution, y: &Image) -> Result<()> {
        if self.distribution != distribution {
            return Err(Error::Argument(format!(
                "expected a {distribution:?} probe, got {:?}",
                self.distribution
            )));
        }
        y.ensure_same_shape(&self.values)
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(u, v)| (u - v) * (u - v))
        .sum();
    Ok(s / a.len() as f64)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// `(1/N) n^T grad_y (n^T h(y))`, i.e. one Hutchinson sample of the
/// per-sample trace of the Jacobian, computed by a reverse-mode pass.
pub fn mc_divergence<D: Denoiser + ?Sized>(h: &D, y: &Image, probe: &ProbeVector) -> Result<f64> {
    probe.expect(ProbeDistribution::StandardNormal, y)?;
    let grad = h.input_vjp(y, &probe.values)?;
    Ok(probe.values.dot(&grad)? / y.len() as f64)
}

/// Gaussian SURE: `mse(y, h(y)) + 2 sigma^2 div - sigma^2`.
pub fn sure_loss<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    sigma: f64,
    probe: &ProbeVector,
) -> Result<RiskEstimate> {
    check_sigma(sigma)?;
    let out = h.apply(y)?;
    let div = mc_divergence(h, y, probe)?;
    let var = sigma * sigma;
    Ok(RiskEstimate::new(mse(y, &out)?, 2.0 * var * div, var, div))
}

/// Randomness of one evaluation of the two-observation objective.
#[derive(Debug, Clone)]
pub struct SteSample {
    /// Drawn from `U(0, b)`.
    pub sigma_gamma: f64,
    /// Input perturbation, `N(0, sigma_gamma^2)` per sample.
    pub gamma: Image,
    pub probe: ProbeVector,
}

impl SteSample {
    /// Draws from the streams `(seed, iter*8 + 0)` (perturbation) and
    /// `(seed, iter*8 + 1)` (probe).
    pub fn draw(like: &Image, b: f64, seed: u64, iter: usize) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("perturbation bound b must be >= 0, got {b}")));
        }
        let mut r = rng::iteration_stream(seed, iter, rng::STREAM_PERTURBATION);
        let sigma_gamma = if b > 0.0 { r.gen_range(0.0..b) } else { 0.0 };
        let gamma = like.map(|_| sigma_gamma * r.sample::<f64, _>(StandardNormal));
        let stream = iter as u64 * rng::STREAMS_PER_ITER + rng::STREAM_PROBE;
        let probe = ProbeVector::sample(like, ProbeDistribution::StandardNormal, seed, stream);
        Ok(SteSample {
            sigma_gamma,
            gamma,
            probe,
        })
    }
}

/// Two-observation objective with a random input perturbation:
/// `y1 = y`, `y2 = y + gamma`, `gamma ~ N(0, s^2)`, `s ~ U(0, b)`;
/// `mse(y1, h(y2)) + 2 sigma^2 div_{y2} h - sigma^2`.
pub fn ste_loss<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    sigma: f64,
    b: f64,
    rng_seed: u64,
) -> Result<RiskEstimate> {
    check_sigma(sigma)?;
    let sample = SteSample::draw(y, b, rng_seed, 0)?;
    ste_loss_with(h, y, sigma, &sample)
}

/// [`ste_loss`] with explicit randomness.
pub fn ste_loss_with<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    sigma: f64,
    sample: &SteSample,
) -> Result<RiskEstimate> {
    check_sigma(sigma)?;
    let y2 = y.add(&sample.gamma)?;
    let out = h.apply(&y2)?;
    let div = mc_divergence(h, &y2, &sample.probe)?;
    let var = sigma * sigma;
    Ok(RiskEstimate::new(mse(y, &out)?, 2.0 * var * div, var, div))
}

/// Poisson unbiased risk estimate for `y = zeta * Poisson(x / zeta)`:
/// `mse(y, h(y)) - zeta mean(y) + 2 zeta/(eps N) (n . y)^T (h(y + eps n) - h(y))`
/// with a Rademacher probe `n`.
pub fn pure_loss<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    zeta: f64,
    eps: f64,
    probe: &ProbeVector,
) -> Result<RiskEstimate> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::Domain(format!("zeta must be > 0, got {zeta}")));
    }
    probe.expect(ProbeDistribution::Rademacher, y)?;
    let n = y.len() as f64;
    let out = h.apply(y)?;
    let shifted = h.apply(&y.add(&probe.values.scale(eps))?)?;
    let diff = shifted.sub(&out)?;
    let weighted: f64 = probe
        .values
        .data()
        .iter()
        .zip(y.data())
        .zip(diff.data())
        .map(|((p, yv), d)| p * yv * d)
        .sum();
    let plain_div = probe.values.dot(&diff)? / (eps * n);
    Ok(RiskEstimate::new(
        mse(y, &out)?,
        2.0 * zeta * weighted / (eps * n),
        zeta * y.mean(),
        plain_div,
    ))
}

/// Single-ground-truth degrees of freedom, per sample:
/// `(mse(x, h) - mse(y, h) + sigma^2) / (2 sigma^2)`.
pub fn df_gt(h_out: &Image, x: &Image, y: &Image, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Err(Error::Domain("df_gt is undefined for sigma = 0".into()));
    }
    let var = sigma * sigma;
    Ok((mse(x, h_out)? - mse(y, h_out)? + var) / (2.0 * var))
}

/// Test-minus-train error with an independent second realization `y_tilde`.
pub fn estimate_optimism(h_out: &Image, y: &Image, y_tilde: &Image) -> Result<f64> {
    Ok(mse(y_tilde, h_out)? - mse(y, h_out)?)
}

#[cfg(test)]
mod tests;
