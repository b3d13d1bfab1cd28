//! Deterministic synthetic test images.
//!
//! Each kind mixes smooth regions with sharp edges or fine texture so that
//! fitting the noise (rather than the signal) is visible in PSNR curves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    Gradient,
    Checkerboard,
    Disks,
    TextLike,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 4] = [
        PhantomKind::Gradient,
        PhantomKind::Checkerboard,
        PhantomKind::Disks,
        PhantomKind::TextLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PhantomKind::Gradient => "gradient",
            PhantomKind::Checkerboard => "checkerboard",
            PhantomKind::Disks => "disks",
            PhantomKind::TextLike => "text-like",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhantomKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown phantom kind `{s}`")))
    }
}

pub fn generate_phantom(
    kind: PhantomKind,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
) -> Result<Image> {
    match kind {
        PhantomKind::Gradient => gradient(height, width, channels),
        PhantomKind::Checkerboard => checkerboard(height, width, channels),
        PhantomKind::Disks => disks(height, width, channels, seed),
        PhantomKind::TextLike => text_like(height, width, channels, seed),
    }
}

fn ramp(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

fn gradient(h: usize, w: usize, c: usize) -> Result<Image> {
    Image::from_fn(h, w, c, |r, q, ch| match ch {
        0 => ramp(q, w),
        1 => ramp(r, h),
        _ => ramp(r + q, h + w - 1),
    })
}

fn checkerboard(h: usize, w: usize, c: usize) -> Result<Image> {
    let block = (h.min(w) / 8).max(1);
    Image::from_fn(h, w, c, |r, q, _| ((r / block + q / block) % 2) as f64)
}

struct Disk {
    cy: f64,
    cx: f64,
    radius: f64,
    color: [f64; 3],
    stripe_period: Option<f64>,
    stripe_angle: f64,
}

fn disks(h: usize, w: usize, c: usize, seed: u64) -> Result<Image> {
    let mut rng = rng::stream(seed, 0xD15C);
    let side = h.min(w) as f64;
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let (ga, gb) = (angle.cos(), angle.sin());
    let base: [f64; 3] = [
        rng.gen_range(0.2..0.4),
        rng.gen_range(0.2..0.4),
        rng.gen_range(0.2..0.4),
    ];
    let count = rng.gen_range(6..=10);
    let shapes: Vec<Disk> = (0..count)
        .map(|_| Disk {
            cy: rng.gen_range(0.0..h as f64),
            cx: rng.gen_range(0.0..w as f64),
            radius: rng.gen_range(side / 12.0..side / 4.0),
            color: [
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.05..0.95),
            ],
            stripe_period: rng.gen_bool(0.5).then(|| rng.gen_range(3.0..6.0)),
            stripe_angle: rng.gen_range(0.0..std::f64::consts::PI),
        })
        .collect();

    Image::from_fn(h, w, c, |r, q, ch| {
        let (y, x) = (r as f64 + 0.5, q as f64 + 0.5);
        let t = ((y / h as f64 - 0.5) * ga + (x / w as f64 - 0.5) * gb) * 0.5;
        let mut v = base[ch] + t * 0.6 + 0.1;
        for d in &shapes {
            let (dy, dx) = (y - d.cy, x - d.cx);
            if dy * dy + dx * dx <= d.radius * d.radius {
                v = d.color[ch];
                if let Some(period) = d.stripe_period {
                    let u = dy * d.stripe_angle.cos() + dx * d.stripe_angle.sin();
                    v += 0.15 * (std::f64::consts::TAU * u / period).sin();
                }
            }
        }
        v.clamp(0.0, 1.0)
    })
}

fn text_like(h: usize, w: usize, c: usize, seed: u64) -> Result<Image> {
    let mut rng = rng::stream(seed, 0x7E47);
    let mut ink = vec![false; h * w];
    let (cell_h, cell_w) = (8usize, 6usize);
    let margin = 1;
    let mut top = margin;
    while top + cell_h <= h {
        let mut left = margin;
        while left + cell_w <= w {
            if rng.gen_bool(0.8) {
                let strokes = rng.gen_range(2..=4);
                for _ in 0..strokes {
                    match rng.gen_range(0..4) {
                        0 => {
                            let q = left + rng.gen_range(0..cell_w - 1);
                            for r in top..top + cell_h - 2 {
                                ink[r * w + q] = true;
                            }
                        }
                        1 => {
                            let r = top + rng.gen_range(0..cell_h - 2);
                            for q in left..left + cell_w - 1 {
                                ink[r * w + q] = true;
                            }
                        }
                        2 => {
                            for k in 0..(cell_h - 2).min(cell_w - 1) {
                                ink[(top + k) * w + left + k] = true;
                            }
                        }
                        _ => {
                            let n = (cell_h - 2).min(cell_w - 1);
                            for k in 0..n {
                                ink[(top + k) * w + left + n - 1 - k] = true;
                            }
                        }
                    }
                }
            }
            left += cell_w;
        }
        top += cell_h;
    }
    let background: [f64; 3] = [0.9, 0.87, 0.8];
    let shade: [f64; 3] = [0.1, 0.12, 0.2];
    Image::from_fn(h, w, c, |r, q, ch| {
        if ink[r * w + q] {
            shade[ch]
        } else {
            background[ch] - 0.15 * ramp(r, h)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_rows_ramp_zero_to_one() {
        let img = generate_phantom(PhantomKind::Gradient, 8, 8, 1, 0).unwrap();
        for r in 0..8 {
            for q in 0..8 {
                assert!((img.get(r, q, 0) - q as f64 / 7.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn checkerboard_alternates() {
        let img = generate_phantom(PhantomKind::Checkerboard, 8, 8, 1, 0).unwrap();
        for r in 0..8 {
            for q in 0..8 {
                assert_eq!(img.get(r, q, 0), ((r + q) % 2) as f64);
            }
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        for kind in PhantomKind::ALL {
            let a = generate_phantom(kind, 64, 64, 3, 7).unwrap();
            let b = generate_phantom(kind, 64, 64, 3, 7).unwrap();
            assert_eq!(a, b, "{kind}");
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)), "{kind}");
        }
    }

    #[test]
    fn seed_changes_random_kinds() {
        for kind in [PhantomKind::Disks, PhantomKind::TextLike] {
            let a = generate_phantom(kind, 32, 32, 1, 1).unwrap();
            let b = generate_phantom(kind, 32, 32, 1, 2).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn invalid_size() {
        assert!(matches!(
            generate_phantom(PhantomKind::Disks, 4, 64, 1, 0),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in PhantomKind::ALL {
            assert_eq!(kind.name().parse::<PhantomKind>().unwrap(), kind);
        }
    }
}
