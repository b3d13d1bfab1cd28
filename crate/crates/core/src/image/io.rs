//! PNG and PGM/PPM reading and writing. Samples are scaled by
//! `1 / (2^bits - 1)`, so a float round trip is exact to half an LSB.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode()?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let buf = decoded.to_luma8();
            planar(h, w, 1, buf.as_raw(), 255.0)
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            let buf = decoded.to_luma16();
            planar(h, w, 1, buf.as_raw(), 65535.0)
        }
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            let buf = decoded.to_rgb8();
            planar(h, w, 3, buf.as_raw(), 255.0)
        }
        _ => {
            let buf = decoded.to_rgb16();
            planar(h, w, 3, buf.as_raw(), 65535.0)
        }
    }
}

fn planar<T: Copy + Into<f64>>(
    h: usize,
    w: usize,
    c: usize,
    interleaved: &[T],
    max: f64,
) -> Result<Image> {
    Image::from_fn(h, w, c, |r, q, ch| interleaved[(r * w + q) * c + ch].into() / max)
}

fn interleaved(img: &Image, max: f64) -> Vec<f64> {
    let (h, w, c) = img.shape();
    let mut out = Vec::with_capacity(img.len());
    for r in 0..h {
        for q in 0..w {
            for ch in 0..c {
                out.push((img.get(r, q, ch).clamp(0.0, 1.0) * max).round());
            }
        }
    }
    out
}

/// Writes `img` clipped to `[0, 1]`. The container is chosen from the
/// extension: `.png`, or `.pgm`/`.ppm`/`.pnm`.
pub fn save_image(img: &Image, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let format = match ext.as_str() {
        "png" => ImageFormat::Png,
        "pgm" | "ppm" | "pnm" => ImageFormat::Pnm,
        other => {
            return Err(Error::Argument(format!(
                "unsupported image extension `{other}` (png, pgm, ppm)"
            )))
        }
    };
    let (h, w, c) = img.shape();
    let (w32, h32) = (w as u32, h as u32);
    let samples = interleaved(img, depth.max_value());
    let dynamic = match (depth, c) {
        (BitDepth::Eight, 1) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w32, h32, samples.iter().map(|&v| v as u8).collect())
                .expect("buffer size matches image"),
        ),
        (BitDepth::Eight, _) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w32, h32, samples.iter().map(|&v| v as u8).collect())
                .expect("buffer size matches image"),
        ),
        (BitDepth::Sixteen, 1) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w32, h32, samples.iter().map(|&v| v as u16).collect())
                .expect("buffer size matches image"),
        ),
        (BitDepth::Sixteen, _) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w32, h32, samples.iter().map(|&v| v as u16).collect())
                .expect("buffer size matches image"),
        ),
    };
    dynamic.save_with_format(path, format)?;
    Ok(())
}
