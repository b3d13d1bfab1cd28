//! Image container, synthetic phantoms, noise synthesis, quality metrics
//! and file I/O.

mod io;
mod metrics;
mod noise;
mod phantom;

pub use io::{load_image, save_image, BitDepth};
pub use metrics::{psnr, ssim, QualityReport, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use noise::{add_gaussian_noise, add_noise, add_poisson_noise, NoiseKind, NoiseSpec};
pub use phantom::{generate_phantom, PhantomKind};

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 8;

/// Dense floating-point raster stored planar (channel-major, then rows).
///
/// Clean images live in `[0, 1]`; noisy observations are left unclipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::Size(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds an image from `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for r in 0..height {
                for q in 0..width {
                    data.push(f(r, q, c));
                }
            }
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of samples `N = H * W * C`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Planar samples: index `(c * H + row) * W + col`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.data[(channel * self.height + row) * self.width + col] = value;
    }

    /// Same shape, new samples.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.height, self.width, self.channels, data)
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Image {
        self.map(|v| v * factor)
    }

    pub fn clipped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn dot(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of one channel as a single-channel image.
    pub fn channel(&self, channel: usize) -> Image {
        let plane = self.height * self.width;
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data[channel * plane..(channel + 1) * plane].to_vec(),
        }
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::Size(format!(
            "{height}x{width} is below the {MIN_SIDE}x{MIN_SIDE} minimum"
        )));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Size(format!("{channels} channels (expected 1 or 3)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_odd_channel_images() {
        assert!(matches!(Image::zeros(7, 8, 1), Err(Error::Size(_))));
        assert!(matches!(Image::zeros(8, 8, 2), Err(Error::Size(_))));
        assert!(matches!(
            Image::new(8, 8, 1, vec![0.0; 10]),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn planar_indexing() {
        let img = Image::from_fn(8, 9, 3, |r, q, c| (100 * c + 10 * r + q) as f64).unwrap();
        assert_eq!(img.get(2, 5, 1), 125.0);
        assert_eq!(img.data()[(8 + 2) * 9 + 5], 125.0);
        assert_eq!(img.channel(2).get(7, 8, 0), 278.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Image::zeros(8, 8, 1).unwrap();
        let b = Image::zeros(8, 9, 1).unwrap();
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
    }
}
