//! Single-image denoising by optimizing a randomly initialized hourglass
//! network against unbiased risk estimates, with automatic stopping.
//!
//! * [`image`]: raster type, phantoms, noise synthesis, PSNR/SSIM, file I/O.
//! * [`network`]: the hourglass denoiser and its autodiff tape.
//! * [`risk`]: MSE, SURE, the perturbed two-observation objective, PURE,
//!   Monte-Carlo divergence and degrees-of-freedom diagnostics.
//! * [`optimizer`]: the per-image optimization loop.
//! * [`diagnostics`]: trajectory bundles, crossing reports, curve export.

pub mod diagnostics;
pub mod error;
pub mod image;
pub mod network;
pub mod optimizer;
pub mod risk;
pub mod rng;

pub use error::{Error, Result};
pub use image::{Image, NoiseKind, NoiseSpec, QualityReport};
pub use network::{ArchSpec, DenoiserNetwork};
pub use optimizer::{optimize, run_baseline_dip, DenoiseResult, Objective, RunConfig, RunTrace};
pub use risk::{Denoiser, RiskEstimate};
