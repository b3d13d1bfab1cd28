//! The encoder-decoder denoiser with skip connections.
//!
//! Every layer is traced as a pair `(primal, tangent)`: the tangent is the
//! forward-mode derivative of the activations along an input direction.
//! Feeding a probe as the input tangent therefore yields `J * probe` as
//! ordinary graph nodes, and its parameter gradient comes from the same
//! reverse pass as the data term.

use rand::Rng;

use super::arch::{ArchSpec, Norm, Upsample};
use super::graph::{reflect, Graph, Resample, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    weight: usize,
    bias: usize,
    k: usize,
    stride: usize,
}

#[derive(Debug, Clone, Copy)]
struct NormLayer {
    gamma: usize,
    beta: usize,
}

/// `conv -> norm -> activation`
#[derive(Debug, Clone, Copy)]
struct Block {
    conv: ConvLayer,
    norm: Option<NormLayer>,
}

#[derive(Debug, Clone)]
struct Level {
    down: [Block; 2],
    skip: Option<Block>,
    up_norm: Option<NormLayer>,
    up: [Block; 2],
}

#[derive(Debug, Clone)]
struct Layout {
    levels: Vec<Level>,
    head: ConvLayer,
}

/// Describes one parameter tensor: `(shape, fan_in)`; `fan_in == 0` marks
/// normalization scale (init 1) and `usize::MAX` normalization shift (init 0).
struct ParamPlan {
    shapes: Vec<((usize, usize, usize), usize)>,
}

impl ParamPlan {
    fn add(&mut self, shape: (usize, usize, usize), fan_in: usize) -> usize {
        self.shapes.push((shape, fan_in));
        self.shapes.len() - 1
    }

    fn conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize) -> ConvLayer {
        let fan_in = cin * k * k;
        ConvLayer {
            weight: self.add((cout, cin, k * k), fan_in),
            bias: self.add((cout, 1, 1), fan_in),
            k,
            stride,
        }
    }

    fn norm(&mut self, c: usize, norm: Norm) -> Option<NormLayer> {
        match norm {
            Norm::None => None,
            Norm::Batch => Some(NormLayer {
                gamma: self.add((c, 1, 1), 0),
                beta: self.add((c, 1, 1), usize::MAX),
            }),
        }
    }

    fn block(&mut self, cin: usize, cout: usize, k: usize, stride: usize, norm: Norm) -> Block {
        Block {
            conv: self.conv(cin, cout, k, stride),
            norm: self.norm(cout, norm),
        }
    }
}

fn plan(arch: &ArchSpec, io_channels: usize) -> (Layout, ParamPlan) {
    let mut p = ParamPlan { shapes: Vec::new() };
    let mut levels = Vec::with_capacity(arch.depth);
    for i in 0..arch.depth {
        let cin = if i == 0 { io_channels } else { arch.channels[i - 1] };
        let ch = arch.channels[i];
        let skip_ch = arch.skip_channels[i];
        let deeper = if i + 1 == arch.depth {
            ch
        } else {
            arch.channels[i + 1]
        };
        let down = [
            p.block(cin, ch, 3, 2, arch.norm),
            p.block(ch, ch, 3, 1, arch.norm),
        ];
        let skip = (skip_ch > 0).then(|| p.block(cin, skip_ch, 1, 1, arch.norm));
        let up_norm = p.norm(skip_ch + deeper, arch.norm);
        let up = [
            p.block(skip_ch + deeper, ch, 3, 1, arch.norm),
            p.block(ch, ch, 1, 1, arch.norm),
        ];
        levels.push(Level {
            down,
            skip,
            up_norm,
            up,
        });
    }
    let head = p.conv(arch.channels[0], io_channels, 1, 1);
    (Layout { levels, head }, p)
}

/// Primal activations plus an optional forward-mode tangent.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub primal: Var,
    pub tangent: Option<Var>,
}

/// Hourglass network `h(.; theta)`.
#[derive(Debug, Clone)]
pub struct DenoiserNetwork {
    arch: ArchSpec,
    io_channels: usize,
    seed: u64,
    params: Vec<Tensor>,
    layout: Layout,
}

impl DenoiserNetwork {
    /// Randomly initialized network; deterministic in `(arch, io_channels, seed)`.
    pub fn new(arch: ArchSpec, io_channels: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        if io_channels == 0 {
            return Err(Error::Config("network needs at least one channel".into()));
        }
        let (layout, plan) = plan(&arch, io_channels);
        let mut rng = rng::stream(seed, 0x1A17);
        let params = plan
            .shapes
            .iter()
            .map(|&((c, h, w), fan_in)| match fan_in {
                0 => Tensor::from_vec(c, h, w, vec![1.0; c * h * w]),
                usize::MAX => Tensor::zeros(c, h, w),
                fan_in => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let data = (0..c * h * w).map(|_| rng.gen_range(-bound..bound)).collect();
                    Tensor::from_vec(c, h, w, data)
                }
            })
            .collect();
        Ok(DenoiserNetwork {
            arch,
            io_channels,
            seed,
            params,
            layout,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(arch: ArchSpec, io_channels: usize, seed: u64, theta: &[f64]) -> Result<Self> {
        let mut net = Self::new(arch, io_channels, seed)?;
        net.set_theta(theta)?;
        Ok(net)
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn io_channels(&self) -> usize {
        self.io_channels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Flattened parameters in layer order.
    pub fn theta(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        let mut offset = 0;
        for t in &mut self.params {
            let n = t.len();
            t.data.copy_from_slice(&theta[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Adds the parameters to `g` as leaves.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|t| g.leaf(t.clone())).collect()
    }

    fn check_input(&self, t: &Tensor) -> Result<()> {
        if t.c != self.io_channels {
            return Err(Error::Shape(format!(
                "network expects {} channels, input has {}",
                self.io_channels, t.c
            )));
        }
        Ok(())
    }

    /// Traces `h(input)` into `g`. When `input.tangent` is set, the result
    /// carries the Jacobian-vector product along it.
    pub fn trace(&self, g: &mut Graph, params: &[Var], input: Dual) -> Result<Dual> {
        let (c, h, w) = g.value(input.primal).shape();
        self.check_input(g.value(input.primal))?;
        let m = self.arch.stride_multiple();
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let x = if (ph, pw) != (h, w) {
            let index = pad_index(c, h, w, ph, pw);
            self.lift(g, input, |g, v| g.gather(v, (c, ph, pw), index.clone()))
        } else {
            input
        };

        let mut stack = Vec::with_capacity(self.arch.depth);
        let mut cur = x;
        for level in &self.layout.levels {
            let skip = level.skip.as_ref().map(|b| self.block(g, params, cur, b));
            stack.push(skip);
            cur = self.block(g, params, cur, &level.down[0]);
            cur = self.block(g, params, cur, &level.down[1]);
        }
        let mode = match self.arch.upsample {
            Upsample::Bilinear => Resample::Bilinear,
            Upsample::Nearest => Resample::Nearest,
        };
        for (level, skip) in self.layout.levels.iter().zip(stack).rev() {
            cur = self.lift(g, cur, |g, v| g.upsample2(v, mode));
            if let Some(s) = skip {
                cur = self.lift2(g, s, cur, |g, a, b| g.concat(a, b));
            }
            if let Some(n) = &level.up_norm {
                cur = self.batch_norm(g, params, cur, n);
            }
            cur = self.block(g, params, cur, &level.up[0]);
            cur = self.block(g, params, cur, &level.up[1]);
        }
        let mut out = self.conv(g, params, cur, &self.layout.head);

        if (ph, pw) != (h, w) {
            let index = crop_index(self.io_channels, ph, pw, h, w);
            out = self.lift(g, out, |g, v| g.gather(v, (self.io_channels, h, w), index.clone()));
        }
        Ok(out)
    }

    fn lift(&self, g: &mut Graph, d: Dual, f: impl Fn(&mut Graph, Var) -> Var) -> Dual {
        Dual {
            primal: f(g, d.primal),
            tangent: d.tangent.map(|t| f(g, t)),
        }
    }

    fn lift2(&self, g: &mut Graph, a: Dual, b: Dual, f: impl Fn(&mut Graph, Var, Var) -> Var) -> Dual {
        let tangent = match (a.tangent, b.tangent) {
            (Some(ta), Some(tb)) => Some(f(g, ta, tb)),
            (None, None) => None,
            _ => unreachable!("tangents are propagated through every branch"),
        };
        Dual {
            primal: f(g, a.primal, b.primal),
            tangent,
        }
    }

    fn conv(&self, g: &mut Graph, p: &[Var], x: Dual, l: &ConvLayer) -> Dual {
        let w = p[l.weight];
        Dual {
            primal: g.conv(x.primal, w, Some(p[l.bias]), l.k, l.stride, self.arch.padding),
            tangent: x.tangent.map(|t| g.conv(t, w, None, l.k, l.stride, self.arch.padding)),
        }
    }

    fn block(&self, g: &mut Graph, p: &[Var], x: Dual, b: &Block) -> Dual {
        let mut y = self.conv(g, p, x, &b.conv);
        if let Some(n) = &b.norm {
            y = self.batch_norm(g, p, y, n);
        }
        let slope = self.arch.activation.slope();
        let mask = g
            .value(y.primal)
            .data
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { slope })
            .collect::<Vec<_>>();
        Dual {
            primal: g.leaky_relu(y.primal, slope),
            tangent: y.tangent.map(|t| g.mask(t, mask)),
        }
    }

    /// Per-channel normalization over spatial positions (batch of one).
    fn batch_norm(&self, g: &mut Graph, p: &[Var], x: Dual, n: &NormLayer) -> Dual {
        let (gamma, beta) = (p[n.gamma], p[n.beta]);
        let mean = g.channel_mean(x.primal);
        let centered = g.broadcast_sub(x.primal, mean);
        let sq = g.mul(centered, centered);
        let var = g.channel_mean(sq);
        let inv_std = g.rsqrt(var, BN_EPS);
        let normalized = g.broadcast_mul(centered, inv_std);
        let scaled = g.broadcast_mul(normalized, gamma);
        let primal = g.broadcast_add(scaled, beta);

        let tangent = x.tangent.map(|t| {
            // d(xc * r) = tc * r + xc * dr, with dr = -r^3 * mean(xc * tc)
            let t_mean = g.channel_mean(t);
            let tc = g.broadcast_sub(t, t_mean);
            let cross = g.mul(centered, tc);
            let cross_mean = g.channel_mean(cross);
            let r2 = g.mul(inv_std, inv_std);
            let r3 = g.mul(r2, inv_std);
            let dr = g.mul(r3, cross_mean);
            let dr = g.scale(dr, -1.0);
            let a = g.broadcast_mul(tc, inv_std);
            let b = g.broadcast_mul(centered, dr);
            let dn = g.add(a, b);
            g.broadcast_mul(dn, gamma)
        });
        Dual { primal, tangent }
    }

    fn run(&self, input: &Image, tangent: Option<&Image>) -> Result<(Graph, Dual, Dual)> {
        let mut g = Graph::new();
        let params = self.bind(&mut g);
        let x = Dual {
            primal: g.leaf(Tensor::from_image(input)),
            tangent: tangent.map(|t| g.leaf(Tensor::from_image(t))),
        };
        let out = self.trace(&mut g, &params, x)?;
        Ok((g, x, out))
    }

    /// `h(input)`.
    pub fn forward(&self, input: &Image) -> Result<Image> {
        let (g, _, out) = self.run(input, None)?;
        g.value(out.primal).to_image()
    }

    /// `(h(input), J(input) * direction)`.
    pub fn forward_jvp(&self, input: &Image, direction: &Image) -> Result<(Image, Image)> {
        input.ensure_same_shape(direction)?;
        let (g, _, out) = self.run(input, Some(direction))?;
        let t = out.tangent.expect("tangent requested");
        Ok((g.value(out.primal).to_image()?, g.value(t).to_image()?))
    }

    /// `J(input)^T * cotangent` by reverse mode.
    pub fn input_vjp(&self, input: &Image, cotangent: &Image) -> Result<Image> {
        input.ensure_same_shape(cotangent)?;
        let (g, x, out) = self.run(input, None)?;
        let grads = g.backward(vec![(out.primal, Tensor::from_image(cotangent))]);
        match grads.get(x.primal) {
            Some(t) => t.to_image(),
            None => Image::zeros(input.height(), input.width(), input.channels()),
        }
    }

    /// Gradient of `<cotangent, h(input)>` with respect to every parameter.
    pub fn param_vjp(&self, input: &Image, cotangent: &Image) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let params = self.bind(&mut g);
        let x = Dual {
            primal: g.leaf(Tensor::from_image(input)),
            tangent: None,
        };
        let out = self.trace(&mut g, &params, x)?;
        let mut grads = g.backward(vec![(out.primal, Tensor::from_image(cotangent))]);
        Ok(params
            .iter()
            .zip(&self.params)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.c, t.h, t.w)))
            .collect())
    }
}

/// Source index of each sample of the input mirror-extended to `ph x pw`.
fn pad_index(c: usize, h: usize, w: usize, ph: usize, pw: usize) -> Vec<usize> {
    let mut index = Vec::with_capacity(c * ph * pw);
    for ch in 0..c {
        for r in 0..ph {
            for q in 0..pw {
                index.push((ch * h + reflect(r, h)) * w + reflect(q, w));
            }
        }
    }
    index
}

fn crop_index(c: usize, ph: usize, pw: usize, h: usize, w: usize) -> Vec<usize> {
    let mut index = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                index.push((ch * ph + r) * pw + q);
            }
        }
    }
    index
}
