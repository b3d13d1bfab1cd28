use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::DenoiserNetwork;

/// An image-to-image map `h` whose risk can be estimated.
///
/// Implementors that are differentiable in their input also provide
/// [`Denoiser::input_vjp`]; the Gaussian estimators need it.
pub trait Denoiser {
    fn apply(&self, y: &Image) -> Result<Image>;

    /// `J_h(y)^T * cotangent`.
    fn input_vjp(&self, y: &Image, cotangent: &Image) -> Result<Image> {
        let _ = (y, cotangent);
        Err(Error::Capability(
            "denoiser is not differentiable with respect to its input".into(),
        ))
    }
}

impl Denoiser for DenoiserNetwork {
    fn apply(&self, y: &Image) -> Result<Image> {
        self.forward(y)
    }

    fn input_vjp(&self, y: &Image, cotangent: &Image) -> Result<Image> {
        DenoiserNetwork::input_vjp(self, y, cotangent)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn apply(&self, y: &Image) -> Result<Image> {
        (**self).apply(y)
    }

    fn input_vjp(&self, y: &Image, cotangent: &Image) -> Result<Image> {
        (**self).input_vjp(y, cotangent)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Denoiser for Identity {
    fn apply(&self, y: &Image) -> Result<Image> {
        Ok(y.clone())
    }

    fn input_vjp(&self, _y: &Image, cotangent: &Image) -> Result<Image> {
        Ok(cotangent.clone())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroMap;

impl Denoiser for ZeroMap {
    fn apply(&self, y: &Image) -> Result<Image> {
        Ok(y.map(|_| 0.0))
    }

    fn input_vjp(&self, _y: &Image, cotangent: &Image) -> Result<Image> {
        Ok(cotangent.map(|_| 0.0))
    }
}

/// `h(y) = factor * y`
#[derive(Debug, Clone, Copy)]
pub struct Scaling(pub f64);

impl Denoiser for Scaling {
    fn apply(&self, y: &Image) -> Result<Image> {
        Ok(y.scale(self.0))
    }

    fn input_vjp(&self, _y: &Image, cotangent: &Image) -> Result<Image> {
        Ok(cotangent.scale(self.0))
    }
}

/// 3x3 box average per channel with zero padding (a symmetric linear map).
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxBlur3;

impl Denoiser for BoxBlur3 {
    fn apply(&self, y: &Image) -> Result<Image> {
        let (h, w, _) = y.shape();
        let mut out = y.map(|_| 0.0);
        for c in 0..y.channels() {
            for r in 0..h {
                for q in 0..w {
                    let mut acc = 0.0;
                    for dr in -1isize..=1 {
                        for dq in -1isize..=1 {
                            let (rr, qq) = (r as isize + dr, q as isize + dq);
                            if rr >= 0 && qq >= 0 && (rr as usize) < h && (qq as usize) < w {
                                acc += y.get(rr as usize, qq as usize, c);
                            }
                        }
                    }
                    out.set(r, q, c, acc / 9.0);
                }
            }
        }
        Ok(out)
    }

    fn input_vjp(&self, _y: &Image, cotangent: &Image) -> Result<Image> {
        self.apply(cotangent)
    }
}

/// `h(y) = A y` for a dense `N x N` matrix (row-major).
#[derive(Debug, Clone)]
pub struct DenseLinear {
    n: usize,
    matrix: Vec<f64>,
}

impl DenseLinear {
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::Shape(format!(
                "dense map of order {n} needs {} entries, got {}",
                n * n,
                matrix.len()
            )));
        }
        Ok(DenseLinear { n, matrix })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    fn check(&self, y: &Image) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::Shape(format!(
                "dense map of order {} applied to {} samples",
                self.n,
                y.len()
            )));
        }
        Ok(())
    }
}

impl Denoiser for DenseLinear {
    fn apply(&self, y: &Image) -> Result<Image> {
        self.check(y)?;
        let out = self
            .matrix
            .chunks(self.n)
            .map(|row| row.iter().zip(y.data()).map(|(a, b)| a * b).sum())
            .collect();
        y.with_data(out)
    }

    fn input_vjp(&self, y: &Image, cotangent: &Image) -> Result<Image> {
        self.check(y)?;
        y.ensure_same_shape(cotangent)?;
        let mut out = vec![0.0; self.n];
        for (row, &v) in self.matrix.chunks(self.n).zip(cotangent.data()) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * v;
            }
        }
        y.with_data(out)
    }
}

/// Wraps a plain function; has no input derivative.
pub struct BlackBox<F>(pub F);

impl<F: Fn(&Image) -> Result<Image>> Denoiser for BlackBox<F> {
    fn apply(&self, y: &Image) -> Result<Image> {
        (self.0)(y)
    }
}
