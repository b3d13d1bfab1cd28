//! Full-reference quality metrics with a fixed peak of 1.0.

use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// `+inf` when the images are identical.
    pub psnr_db: f64,
    pub ssim: f64,
}

impl QualityReport {
    /// Scores `estimate` against `reference` after clipping both to `[0, 1]`.
    pub fn measure(estimate: &Image, reference: &Image) -> Result<Self> {
        let (e, r) = (estimate.clipped(), reference.clipped());
        Ok(QualityReport {
            psnr_db: psnr(&e, &r, false)?,
            ssim: ssim(&e, &r)?,
        })
    }
}

/// `10 log10(1 / MSE)`; both images are clipped to `[0, 1]` first when `clip`.
pub fn psnr(a: &Image, b: &Image, clip: bool) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let squared: f64 = if clip {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&u, &v)| (u.clamp(0.0, 1.0) - v.clamp(0.0, 1.0)).powi(2))
            .sum()
    } else {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&u, &v)| (u - v).powi(2))
            .sum()
    };
    let mse = squared / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for q in 0..ow {
            rows[r * ow + q] = (0..SSIM_WINDOW).map(|t| k[t] * plane[r * w + q + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for q in 0..ow {
            out[r * ow + q] = (0..SSIM_WINDOW).map(|t| k[t] * rows[(r + t) * ow + q]).sum();
        }
    }
    out
}

/// Single-scale SSIM (Gaussian window, dynamic range 1), computed per
/// channel over all valid window positions and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w, channels) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Size(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let k = gaussian_kernel();
    let plane = h * w;
    let mut total = 0.0;
    for c in 0..channels {
        let pa = &a.data()[c * plane..(c + 1) * plane];
        let pb = &b.data()[c * plane..(c + 1) * plane];
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(pb).map(|(u, v)| u * v).collect();
        let mu_a = filter_valid(pa, h, w, &k);
        let mu_b = filter_valid(pb, h, w, &k);
        let e_aa = filter_valid(&aa, h, w, &k);
        let e_bb = filter_valid(&bb, h, w, &k);
        let e_ab = filter_valid(&ab, h, w, &k);
        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / channels as f64)
}
