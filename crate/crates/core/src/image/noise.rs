use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::rng;

/// Noise model of an observation. `sigma` is on the `[0, 1]` intensity
/// scale; Poisson observations are `zeta * Poisson(x / zeta)`, so that
/// `E[y] = x` and `Var[y] = zeta * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Poisson { zeta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian { sigma },
            seed,
        }
    }

    pub fn poisson(zeta: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Poisson { zeta },
            seed,
        }
    }
}

pub fn add_noise(x: &Image, spec: &NoiseSpec) -> Result<Image> {
    match spec.kind {
        NoiseKind::Gaussian { sigma } => add_gaussian_noise(x, sigma, spec.seed),
        NoiseKind::Poisson { zeta } => add_poisson_noise(x, zeta, spec.seed),
    }
}

/// `y = x + n`, `n ~ N(0, sigma^2)` i.i.d. The result is not clipped.
pub fn add_gaussian_noise(x: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("gaussian sigma must be >= 0, got {sigma}")));
    }
    let mut rng = rng::stream(seed, 0);
    Ok(x.map(|v| {
        let n: f64 = rng.sample(StandardNormal);
        v + sigma * n
    }))
}

pub fn add_poisson_noise(x: &Image, zeta: f64, seed: u64) -> Result<Image> {
    if !(zeta > 0.0) || !zeta.is_finite() {
        return Err(Error::Domain(format!("poisson zeta must be > 0, got {zeta}")));
    }
    if let Some(v) = x.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!(
            "poisson noise needs non-negative intensities, found {v}"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let mut out = Vec::with_capacity(x.len());
    for &v in x.data() {
        let rate = v / zeta;
        let count = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::Domain(format!("poisson rate {rate}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        out.push(zeta * count);
    }
    x.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
        (m, var)
    }

    #[test]
    fn zero_sigma_is_identity() {
        let x = Image::from_fn(16, 16, 1, |r, q, _| (r * q) as f64 / 225.0).unwrap();
        assert_eq!(add_gaussian_noise(&x, 0.0, 3).unwrap(), x);
    }

    #[test]
    fn negative_sigma_rejected() {
        let x = Image::zeros(8, 8, 1).unwrap();
        assert!(matches!(add_gaussian_noise(&x, -0.1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn gaussian_sample_std_and_mean() {
        let sigma = 25.0 / 255.0;
        let x = Image::filled(256, 256, 1, 0.5).unwrap();
        let y = add_gaussian_noise(&x, sigma, 11).unwrap();
        let d: Vec<f64> = y.sub(&x).unwrap().into_data();
        let (m, var) = mean_var(&d);
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.03);
        let n = d.len() as f64;
        assert!(m.abs() < 4.0 * sigma / n.sqrt());
    }

    #[test]
    fn gaussian_is_unclipped_and_pure() {
        let x = Image::filled(32, 32, 1, 1.0).unwrap();
        let a = add_gaussian_noise(&x, 0.2, 5).unwrap();
        let b = add_gaussian_noise(&x, 0.2, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| v > 1.0));
    }

    #[test]
    fn poisson_of_black_is_black() {
        let x = Image::zeros(16, 16, 3).unwrap();
        let y = add_poisson_noise(&x, 0.1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn poisson_mean() {
        let x = Image::filled(64, 64, 1, 0.5).unwrap();
        let y = add_poisson_noise(&x, 0.01, 2).unwrap();
        assert!((y.mean() / 0.5 - 1.0).abs() < 0.02);
    }

    #[test]
    fn poisson_variance_is_zeta_x() {
        let x = Image::filled(256, 256, 1, 0.5).unwrap();
        let y = add_poisson_noise(&x, 0.2, 3).unwrap();
        let (_, var) = mean_var(y.data());
        assert!((var / 0.1 - 1.0).abs() < 0.10, "var = {var}");
    }

    #[test]
    fn poisson_domain_errors() {
        let x = Image::filled(8, 8, 1, -0.1).unwrap();
        assert!(matches!(add_poisson_noise(&x, 0.1, 0), Err(Error::Domain(_))));
        let x = Image::filled(8, 8, 1, 0.1).unwrap();
        assert!(matches!(add_poisson_noise(&x, 0.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn noise_spec_serializes_flat() {
        let s = serde_json::to_string(&NoiseSpec::gaussian(0.1, 4)).unwrap();
        assert_eq!(s, r#"{"kind":"gaussian","sigma":0.1,"seed":4}"#);
        let back: NoiseSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, NoiseSpec::gaussian(0.1, 4));
    }
}
