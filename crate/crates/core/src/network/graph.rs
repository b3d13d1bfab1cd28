//! A small reverse-mode tape over [`Tensor`]s.
//!
//! Only the operations the hourglass network needs are provided. Every op
//! records its inputs; [`Graph::backward`] walks the tape once in reverse.
//! Forward-mode tangents are built by the caller as ordinary tape nodes,
//! so reverse-over-forward gradients (needed for divergence penalties)
//! fall out of the same machinery.

use super::arch::Padding;
use super::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Resample {
    Nearest,
    Bilinear,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        k: usize,
        stride: usize,
        padding: Padding,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Multiplication by a constant tensor.
    Mask(Var, Vec<f64>),
    /// `(c, 1, 1)` result.
    ChannelMean(Var),
    /// `x + s[c]` for `s` of shape `(c, 1, 1)`.
    BroadcastAdd(Var, Var),
    BroadcastSub(Var, Var),
    BroadcastMul(Var, Var),
    Rsqrt(Var),
    LeakyRelu(Var, f64),
    Upsample2(Var, Resample),
    Concat(Var, Var),
    /// `out[j] = x[index[j]]`.
    Gather(Var, Vec<usize>),
    Dot(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a backward pass, indexed by [`Var`].
pub struct Grads(Vec<Option<Tensor>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.0.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.0.get_mut(v.0).and_then(Option::take)
    }
}

fn conv_out(n: usize, k: usize, stride: usize) -> usize {
    let pad = k / 2;
    (n + 2 * pad - k) / stride + 1
}

/// Index `i` (possibly outside `0..n`) mapped through the padding rule.
fn tap(i: isize, n: usize, pad: Padding) -> Option<usize> {
    if i >= 0 && (i as usize) < n {
        return Some(i as usize);
    }
    match pad {
        Padding::Zero => None,
        Padding::Reflect => Some(reflect(i.unsigned_abs(), n)),
    }
}

/// Mirror index without repeating the edge sample.
pub(crate) fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Unfolds `x` into a `(c*k*k) x (oh*ow)` matrix, padding `k/2` per side.
fn im2col(x: &Tensor, k: usize, stride: usize, padding: Padding) -> (Vec<f64>, usize, usize) {
    let (c, h, w) = x.shape();
    let (oh, ow) = (conv_out(h, k, stride), conv_out(w, k, stride));
    let pad = (k / 2) as isize;
    let cols = oh * ow;
    let mut out = vec![0.0; c * k * k * cols];
    for ci in 0..c {
        let plane = &x.data[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..oh {
                    let Some(iy) = tap((oy * stride) as isize + ky as isize - pad, h, padding) else {
                        continue;
                    };
                    let src = &plane[iy * w..(iy + 1) * w];
                    for ox in 0..ow {
                        if let Some(ix) = tap((ox * stride) as isize + kx as isize - pad, w, padding) {
                            dst[oy * ow + ox] = src[ix];
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, stride: usize, padding: Padding) -> Tensor {
    let (oh, ow) = (conv_out(h, k, stride), conv_out(w, k, stride));
    let pad = (k / 2) as isize;
    let n = oh * ow;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let plane = &mut out.data[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let Some(iy) = tap((oy * stride) as isize + ky as isize - pad, h, padding) else {
                        continue;
                    };
                    for ox in 0..ow {
                        if let Some(ix) = tap((ox * stride) as isize + kx as isize - pad, w, padding) {
                            plane[iy * w + ix] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Source taps `(i0, i1, w0, w1)` for 2x upsampling along one axis
/// (half-pixel centres, edge clamped).
fn bilinear_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let f = src - i0 as f64;
            (i0, i1, 1.0 - f, f)
        })
        .collect()
}

fn upsample(x: &Tensor, mode: Resample) -> Tensor {
    let (c, h, w) = x.shape();
    let mut out = Tensor::zeros(c, 2 * h, 2 * w);
    let (oh, ow) = (2 * h, 2 * w);
    match mode {
        Resample::Nearest => {
            for ci in 0..c {
                for y in 0..oh {
                    for q in 0..ow {
                        out.data[(ci * oh + y) * ow + q] = x.data[(ci * h + y / 2) * w + q / 2];
                    }
                }
            }
        }
        Resample::Bilinear => {
            let ty = bilinear_taps(h);
            let tx = bilinear_taps(w);
            for ci in 0..c {
                let src = &x.data[ci * h * w..(ci + 1) * h * w];
                for (y, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                    for (q, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                        out.data[(ci * oh + y) * ow + q] = wy0
                            * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1])
                            + wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
                    }
                }
            }
        }
    }
    out
}

fn upsample_adjoint(g: &Tensor, mode: Resample, h: usize, w: usize) -> Tensor {
    let c = g.c;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(c, h, w);
    match mode {
        Resample::Nearest => {
            for ci in 0..c {
                for y in 0..oh {
                    for q in 0..ow {
                        out.data[(ci * h + y / 2) * w + q / 2] += g.data[(ci * oh + y) * ow + q];
                    }
                }
            }
        }
        Resample::Bilinear => {
            let ty = bilinear_taps(h);
            let tx = bilinear_taps(w);
            for ci in 0..c {
                let dst = &mut out.data[ci * h * w..(ci + 1) * h * w];
                for (y, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                    for (q, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                        let v = g.data[(ci * oh + y) * ow + q];
                        dst[y0 * w + x0] += wy0 * wx0 * v;
                        dst[y0 * w + x1] += wy0 * wx1 * v;
                        dst[y1 * w + x0] += wy1 * wx0 * v;
                        dst[y1 * w + x1] += wy1 * wx1 * v;
                    }
                }
            }
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// 2-D convolution with zero padding `k/2`. `w` has shape
    /// `(c_out, c_in, k*k)`, `b` shape `(c_out, 1, 1)`.
    pub fn conv(&mut self, x: Var, w: Var, b: Option<Var>, k: usize, stride: usize, padding: Padding) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        assert_eq!(wv.h, xv.c, "conv input channels");
        assert_eq!(wv.w, k * k, "conv kernel size");
        let cout = wv.c;
        let kk = xv.c * k * k;
        let (oh, ow) = (conv_out(xv.h, k, stride), conv_out(xv.w, k, stride));
        let mut out = Tensor::zeros(cout, oh, ow);
        if k == 1 && stride == 1 {
            gemm(cout, kk, oh * ow, &wv.data, false, &xv.data, false, &mut out.data, false);
        } else {
            let (cols, _, _) = im2col(xv, k, stride, padding);
            gemm(cout, kk, oh * ow, &wv.data, false, &cols, false, &mut out.data, false);
        }
        if let Some(b) = b {
            let bv = &self.value(b).data;
            let plane = oh * ow;
            for (co, bias) in bv.iter().enumerate() {
                out.data[co * plane..(co + 1) * plane]
                    .iter_mut()
                    .for_each(|v| *v += bias);
            }
        }
        self.push(out, Op::Conv { x, w, b, k, stride, padding })
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "elementwise shape");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.c, av.h, av.w, data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, f: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.c, av.h, av.w, av.data.iter().map(|v| v * f).collect());
        self.push(out, Op::Scale(a, f))
    }

    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let av = self.value(a);
        assert_eq!(av.len(), mask.len(), "mask size");
        let data = av.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(av.c, av.h, av.w, data);
        self.push(out, Op::Mask(a, mask))
    }

    pub fn channel_mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let plane = av.plane();
        let data = av
            .data
            .chunks(plane)
            .map(|ch| ch.iter().sum::<f64>() / plane as f64)
            .collect();
        let out = Tensor::from_vec(av.c, 1, 1, data);
        self.push(out, Op::ChannelMean(a))
    }

    fn broadcast(&mut self, a: Var, s: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, sv) = (self.value(a), self.value(s));
        assert_eq!(sv.shape(), (av.c, 1, 1), "broadcast operand shape");
        let plane = av.plane();
        let mut data = av.data.clone();
        for (ch, &sc) in data.chunks_mut(plane).zip(&sv.data) {
            ch.iter_mut().for_each(|v| *v = f(*v, sc));
        }
        let out = Tensor::from_vec(av.c, av.h, av.w, data);
        self.push(out, op)
    }

    pub fn broadcast_add(&mut self, a: Var, s: Var) -> Var {
        self.broadcast(a, s, |x, y| x + y, Op::BroadcastAdd(a, s))
    }

    pub fn broadcast_sub(&mut self, a: Var, s: Var) -> Var {
        self.broadcast(a, s, |x, y| x - y, Op::BroadcastSub(a, s))
    }

    pub fn broadcast_mul(&mut self, a: Var, s: Var) -> Var {
        self.broadcast(a, s, |x, y| x * y, Op::BroadcastMul(a, s))
    }

    /// `(a + eps)^(-1/2)`
    pub fn rsqrt(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let data = av.data.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = Tensor::from_vec(av.c, av.h, av.w, data);
        self.push(out, Op::Rsqrt(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let av = self.value(a);
        let data = av
            .data
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let out = Tensor::from_vec(av.c, av.h, av.w, data);
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub(crate) fn upsample2(&mut self, a: Var, mode: Resample) -> Var {
        let out = upsample(self.value(a), mode);
        self.push(out, Op::Upsample2(a, mode))
    }

    /// Channel concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!((av.h, av.w), (bv.h, bv.w), "concat spatial size");
        let mut data = av.data.clone();
        data.extend_from_slice(&bv.data);
        let out = Tensor::from_vec(av.c + bv.c, av.h, av.w, data);
        self.push(out, Op::Concat(a, b))
    }

    pub fn gather(&mut self, a: Var, shape: (usize, usize, usize), index: Vec<usize>) -> Var {
        let av = self.value(a);
        assert_eq!(shape.0 * shape.1 * shape.2, index.len(), "gather size");
        let data = index.iter().map(|&i| av.data[i]).collect();
        let out = Tensor::from_vec(shape.0, shape.1, shape.2, data);
        self.push(out, Op::Gather(a, index))
    }

    /// Scalar inner product.
    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "dot shape");
        let s = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::Dot(a, b))
    }

    /// Reverse pass seeded with `(node, cotangent)` pairs.
    pub fn backward(&self, seeds: Vec<(Var, Tensor)>) -> Grads {
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        let mut start = 0;
        for (v, t) in seeds {
            assert_eq!(t.shape(), self.value(v).shape(), "seed shape");
            start = start.max(v.0);
            accumulate(&mut grads, v, t);
        }
        for idx in (0..=start).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&self.nodes[idx], &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads(grads)
    }

    /// Reverse pass for a weighted sum of scalar nodes.
    pub fn backward_scalars(&self, seeds: &[(Var, f64)]) -> Grads {
        self.backward(seeds.iter().map(|&(v, c)| (v, Tensor::scalar(c))).collect())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, k, stride, padding } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (cout, cin) = (wv.c, wv.h);
                let kk = cin * k * k;
                let n = g.plane();
                let direct = *k == 1 && *stride == 1;
                let cols_owned;
                let cols: &[f64] = if direct {
                    &xv.data
                } else {
                    cols_owned = im2col(xv, *k, *stride, *padding).0;
                    &cols_owned
                };
                let mut gw = Tensor::zeros(cout, cin, k * k);
                gemm(cout, n, kk, &g.data, false, cols, true, &mut gw.data, false);
                accumulate(grads, *w, gw);
                if let Some(b) = b {
                    let gb: Vec<f64> = g.data.chunks(n).map(|c| c.iter().sum()).collect();
                    accumulate(grads, *b, Tensor::from_vec(cout, 1, 1, gb));
                }
                let mut gcols = vec![0.0; kk * n];
                gemm(kk, cout, n, &wv.data, true, &g.data, false, &mut gcols, false);
                let gx = if direct {
                    Tensor::from_vec(cin, xv.h, xv.w, gcols)
                } else {
                    col2im(&gcols, cin, xv.h, xv.w, *k, *stride, *padding)
                };
                accumulate(grads, *x, gx);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, zip(g, bv, |x, y| x * y));
                accumulate(grads, *b, zip(g, av, |x, y| x * y));
            }
            Op::Scale(a, f) => accumulate(grads, *a, map(g, |v| v * f)),
            Op::Mask(a, m) => {
                let data = g.data.iter().zip(m).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, Tensor::from_vec(g.c, g.h, g.w, data));
            }
            Op::ChannelMean(a) => {
                let av = self.value(*a);
                let plane = av.plane();
                let mut out = Tensor::zeros(av.c, av.h, av.w);
                for (ch, gv) in out.data.chunks_mut(plane).zip(&g.data) {
                    ch.iter_mut().for_each(|v| *v = gv / plane as f64);
                }
                accumulate(grads, *a, out);
            }
            Op::BroadcastAdd(a, s) | Op::BroadcastSub(a, s) => {
                let sign = if matches!(node.op, Op::BroadcastSub(..)) {
                    -1.0
                } else {
                    1.0
                };
                let plane = g.plane();
                let gs: Vec<f64> = g
                    .data
                    .chunks(plane)
                    .map(|c| sign * c.iter().sum::<f64>())
                    .collect();
                accumulate(grads, *a, g.clone());
                accumulate(grads, *s, Tensor::from_vec(g.c, 1, 1, gs));
            }
            Op::BroadcastMul(a, s) => {
                let (av, sv) = (self.value(*a), self.value(*s));
                let plane = g.plane();
                let mut ga = g.clone();
                let mut gs = vec![0.0; g.c];
                for ci in 0..g.c {
                    let range = ci * plane..(ci + 1) * plane;
                    ga.data[range.clone()]
                        .iter_mut()
                        .for_each(|v| *v *= sv.data[ci]);
                    gs[ci] = g.data[range.clone()]
                        .iter()
                        .zip(&av.data[range])
                        .map(|(x, y)| x * y)
                        .sum();
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *s, Tensor::from_vec(g.c, 1, 1, gs));
            }
            Op::Rsqrt(a) => {
                // d/da (a+eps)^(-1/2) = -0.5 * out^3
                let out = &node.value;
                accumulate(grads, *a, zip(g, out, |x, r| -0.5 * x * r * r * r));
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                accumulate(
                    grads,
                    *a,
                    zip(g, av, |x, v| if v > 0.0 { x } else { slope * x }),
                );
            }
            Op::Upsample2(a, mode) => {
                let av = self.value(*a);
                accumulate(grads, *a, upsample_adjoint(g, *mode, av.h, av.w));
            }
            Op::Concat(a, b) => {
                let av = self.value(*a);
                let split = av.len();
                let bv = self.value(*b);
                accumulate(
                    grads,
                    *a,
                    Tensor::from_vec(av.c, av.h, av.w, g.data[..split].to_vec()),
                );
                accumulate(
                    grads,
                    *b,
                    Tensor::from_vec(bv.c, bv.h, bv.w, g.data[split..].to_vec()),
                );
            }
            Op::Gather(a, index) => {
                let av = self.value(*a);
                let mut out = Tensor::zeros(av.c, av.h, av.w);
                for (gv, &i) in g.data.iter().zip(index) {
                    out.data[i] += gv;
                }
                accumulate(grads, *a, out);
            }
            Op::Dot(a, b) => {
                let s = g.data[0];
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, map(bv, |v| v * s));
                accumulate(grads, *b, map(av, |v| v * s));
            }
        }
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(t.c, t.h, t.w, t.data.iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.c,
        a.h,
        a.w,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = crate::rng::stream(seed, 0);
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Checks every op's adjoint against central differences of
    /// `<probe, f(leaves)>` for a graph built by `build`.
    fn check<F>(leaves: Vec<Tensor>, build: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let eval = |ls: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ls.iter().map(|t| g.leaf(t.clone())).collect();
            let out = build(&mut g, &vars);
            (g, vars, out)
        };
        let (g, vars, out) = eval(&leaves);
        let shape = g.value(out).shape();
        let probe = random(shape.0, shape.1, shape.2, 99);
        let objective = |ls: &[Tensor]| {
            let (g, _, out) = eval(ls);
            g.value(out).data.iter().zip(&probe.data).map(|(a, b)| a * b).sum::<f64>()
        };
        let grads = g.backward(vec![(out, probe.clone())]);
        let h = 1e-6;
        for (li, var) in vars.iter().enumerate() {
            let analytic = grads.get(*var).cloned().unwrap_or_else(|| {
                let t = &leaves[li];
                Tensor::zeros(t.c, t.h, t.w)
            });
            for i in 0..leaves[li].len() {
                let mut plus = leaves.clone();
                plus[li].data[i] += h;
                let mut minus = leaves.clone();
                minus[li].data[i] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let a = analytic.data[i];
                assert!(
                    (fd - a).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "leaf {li} elem {i}: fd {fd} vs analytic {a}"
                );
            }
        }
    }

    #[test]
    fn conv_adjoints() {
        for padding in [Padding::Zero, Padding::Reflect] {
            for (k, stride) in [(3, 1), (3, 2), (1, 1)] {
                check(
                    vec![random(2, 6, 5, 1), random(3, 2, k * k, 2), random(3, 1, 1, 3)],
                    |g, v| g.conv(v[0], v[1], Some(v[2]), k, stride, padding),
                );
            }
            // single-row planes exercise the degenerate mirror
            check(vec![random(1, 1, 4, 8), random(2, 1, 9, 9)], |g, v| {
                g.conv(v[0], v[1], None, 3, 1, padding)
            });
        }
    }

    #[test]
    fn reflect_padding_keeps_constants_constant() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(1, 5, 4, vec![2.0; 20]));
        let w = g.leaf(Tensor::from_vec(1, 1, 9, (1..=9).map(f64::from).collect()));
        let y = g.conv(x, w, None, 3, 2, Padding::Reflect);
        assert!(g.value(y).data.iter().all(|&v| v == 90.0));
    }

    #[test]
    fn elementwise_and_broadcast_adjoints() {
        check(vec![random(2, 3, 3, 4), random(2, 3, 3, 5)], |g, v| {
            let a = g.mul(v[0], v[1]);
            let b = g.sub(a, v[1]);
            let c = g.add(b, v[0]);
            let d = g.scale(c, 1.7);
            g.mask(d, (0..18).map(|i| i as f64 * 0.1).collect())
        });
        check(vec![random(2, 3, 4, 6), random(2, 1, 1, 7)], |g, v| {
            let m = g.channel_mean(v[0]);
            let a = g.broadcast_sub(v[0], m);
            let b = g.broadcast_mul(a, v[1]);
            g.broadcast_add(b, v[1])
        });
    }

    #[test]
    fn rsqrt_and_activation_adjoints() {
        let mut pos = random(2, 3, 3, 8);
        pos.data.iter_mut().for_each(|v| *v = v.abs() + 0.1);
        check(vec![pos], |g, v| g.rsqrt(v[0], 1e-5));
        check(vec![random(2, 3, 3, 9)], |g, v| g.leaky_relu(v[0], 0.1));
    }

    #[test]
    fn resampling_adjoints() {
        for mode in [Resample::Nearest, Resample::Bilinear] {
            check(vec![random(2, 3, 4, 10)], |g, v| g.upsample2(v[0], mode));
        }
        check(vec![random(2, 3, 3, 11), random(1, 3, 3, 12)], |g, v| {
            let c = g.concat(v[0], v[1]);
            g.gather(c, (1, 2, 2), vec![0, 5, 5, 26])
        });
        check(vec![random(1, 3, 3, 13), random(1, 3, 3, 14)], |g, v| g.dot(v[0], v[1]));
    }

    #[test]
    fn bilinear_preserves_constants() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec(1, 3, 3, vec![0.25; 9]));
        let y = g.upsample2(x, Resample::Bilinear);
        assert!(g.value(y).data.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}
