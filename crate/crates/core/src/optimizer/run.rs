use rand::Rng;

use super::config::{BaselineInput, Objective, RunConfig};
use super::ema::ema_update;
use super::radam::RAdam;
use super::stopping::ZeroCrossing;
use super::trace::{RunTrace, StopReason, TraceRecord};
use crate::error::{Error, Result};
use crate::image::{psnr, Image};
use crate::network::{DenoiserNetwork, Dual, Graph, Grads, Tensor, Var};
use crate::risk::{df_gt, ProbeDistribution, ProbeVector, RiskEstimate, SteSample};
use crate::rng;

const FIXED_NOISE_TAG: u64 = 0xF1ED;
const FIXED_NOISE_SCALE: f64 = 0.1;

/// The best iterate by PSNR to the ground truth (only with ground truth).
#[derive(Debug, Clone, PartialEq)]
pub struct PeakIterate {
    pub iter: usize,
    pub psnr_to_x: f64,
    pub output: Image,
}

#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub output_last: Image,
    /// Running average of the outputs up to and including `stop_iter`.
    pub output_ema: Image,
    pub trace: RunTrace,
    pub peak: Option<PeakIterate>,
}

/// Objective value, network output and parameter gradient at one iteration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub estimate: RiskEstimate,
    /// `None` for `dip`, which has no divergence term.
    pub df_mc: Option<f64>,
    pub output: Image,
    pub grads: Vec<Tensor>,
}

fn collect(mut grads: Grads, params: &[Var], net: &DenoiserNetwork) -> Vec<Tensor> {
    params
        .iter()
        .zip(net.params())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.c, t.h, t.w)))
        .collect()
}

/// The `dip` network input: the noisy image or a fixed random code.
pub fn baseline_input(y: &Image, cfg: &RunConfig) -> Image {
    match cfg.baseline_input {
        BaselineInput::NoisyImage => y.clone(),
        BaselineInput::FixedNoise => {
            let mut r = rng::stream(rng::derive_seed(cfg.seed, FIXED_NOISE_TAG), 0);
            let mut data = vec![0.0; y.len()];
            for v in &mut data {
                *v = r.gen_range(0.0..FIXED_NOISE_SCALE);
            }
            y.with_data(data).expect("same length")
        }
    }
}

fn eval_dip(net: &DenoiserNetwork, input: &Image, y: &Image) -> Result<Evaluation> {
    let n = y.len() as f64;
    let mut g = Graph::new();
    let p = net.bind(&mut g);
    let x = g.leaf(Tensor::from_image(input));
    let out = net.trace(&mut g, &p, Dual { primal: x, tangent: None })?;
    let yv = g.leaf(Tensor::from_image(y));
    let d = g.sub(out.primal, yv);
    let fid = g.dot(d, d);
    let fidelity = g.value(fid).data[0] / n;
    let grads = g.backward_scalars(&[(fid, 1.0 / n)]);
    Ok(Evaluation {
        estimate: RiskEstimate::new(fidelity, 0.0, 0.0, f64::NAN),
        df_mc: None,
        output: g.value(out.primal).to_image()?,
        grads: collect(grads, &p, net),
    })
}

/// SURE evaluated at `y + gamma` against `y`, with the divergence taken as
/// `probe . J probe` from a tangent carried through the forward pass.
fn eval_sure(net: &DenoiserNetwork, y: &Image, sigma: f64, sample: &SteSample) -> Result<Evaluation> {
    let n = y.len() as f64;
    let var = sigma * sigma;
    let y2 = y.add(&sample.gamma)?;
    let mut g = Graph::new();
    let p = net.bind(&mut g);
    let x = g.leaf(Tensor::from_image(&y2));
    let probe = g.leaf(Tensor::from_image(&sample.probe.values));
    let out = net.trace(&mut g, &p, Dual { primal: x, tangent: Some(probe) })?;
    let yv = g.leaf(Tensor::from_image(y));
    let d = g.sub(out.primal, yv);
    let fid = g.dot(d, d);
    let div = g.dot(probe, out.tangent.expect("tangent requested"));
    let (fid_v, div_v) = (g.value(fid).data[0] / n, g.value(div).data[0] / n);
    let mut seeds = vec![(fid, 1.0 / n)];
    if var > 0.0 {
        seeds.push((div, 2.0 * var / n));
    }
    let grads = g.backward_scalars(&seeds);
    Ok(Evaluation {
        estimate: RiskEstimate::new(fid_v, 2.0 * var * div_v, var, div_v),
        df_mc: Some(div_v),
        output: g.value(out.primal).to_image()?,
        grads: collect(grads, &p, net),
    })
}

fn eval_pure(net: &DenoiserNetwork, y: &Image, zeta: f64, eps: f64, probe: &ProbeVector) -> Result<Evaluation> {
    let n = y.len() as f64;
    let shifted = y.add(&probe.values.scale(eps))?;
    let weights = probe.values.zip_map(y, |a, b| a * b)?;
    let mut g = Graph::new();
    let p = net.bind(&mut g);
    let x0 = g.leaf(Tensor::from_image(y));
    let x1 = g.leaf(Tensor::from_image(&shifted));
    let out0 = net.trace(&mut g, &p, Dual { primal: x0, tangent: None })?;
    let out1 = net.trace(&mut g, &p, Dual { primal: x1, tangent: None })?;
    let d = g.sub(out0.primal, x0);
    let fid = g.dot(d, d);
    let diff = g.sub(out1.primal, out0.primal);
    let wv = g.leaf(Tensor::from_image(&weights));
    let pv = g.leaf(Tensor::from_image(&probe.values));
    let cross = g.dot(wv, diff);
    let plain = g.dot(pv, diff);
    let div_scale = 2.0 * zeta / (eps * n);
    let fid_v = g.value(fid).data[0] / n;
    let div_v = g.value(cross).data[0] * div_scale;
    let df_mc = g.value(plain).data[0] / (eps * n);
    let grads = g.backward_scalars(&[(fid, 1.0 / n), (cross, div_scale)]);
    Ok(Evaluation {
        estimate: RiskEstimate::new(fid_v, div_v, zeta * y.mean(), df_mc),
        df_mc: Some(df_mc),
        output: g.value(out0.primal).to_image()?,
        grads: collect(grads, &p, net),
    })
}

/// Evaluates the configured objective at the current parameters with the
/// randomness of iteration `iter`, exactly as [`optimize`] does.
pub fn evaluate_objective(net: &DenoiserNetwork, y: &Image, cfg: &RunConfig, iter: usize) -> Result<Evaluation> {
    cfg.validate()?;
    evaluate(net, y, &baseline_input(y, cfg), cfg, iter)
}

fn evaluate(net: &DenoiserNetwork, y: &Image, dip_input: &Image, cfg: &RunConfig, iter: usize) -> Result<Evaluation> {
    match cfg.objective {
        Objective::Dip => eval_dip(net, dip_input, y),
        Objective::DipSure => eval_sure(net, y, cfg.sigma, &SteSample::draw(y, 0.0, cfg.seed, iter)?),
        Objective::Ste => eval_sure(net, y, cfg.sigma, &SteSample::draw(y, cfg.effective_b(), cfg.seed, iter)?),
        Objective::Pure => {
            let stream = iter as u64 * rng::STREAMS_PER_ITER + rng::STREAM_PROBE;
            let probe = ProbeVector::sample(y, ProbeDistribution::Rademacher, cfg.seed, stream);
            eval_pure(net, y, cfg.zeta, cfg.eps, &probe)
        }
    }
}

/// Optimizes `net` on the single observation `y`.
///
/// Each iteration evaluates the objective at the current parameters, folds
/// the output into the running average, logs a record, checks the stopping
/// rule and only then takes a RAdam step. With `x` supplied the trace also
/// carries PSNR to `x` and the single-ground-truth degrees of freedom.
pub fn optimize(net: &mut DenoiserNetwork, y: &Image, cfg: &RunConfig, x: Option<&Image>) -> Result<DenoiseResult> {
    cfg.validate()?;
    if let Some(x) = x {
        x.ensure_same_shape(y)?;
    }
    if y.channels() != net.io_channels() {
        return Err(Error::Shape(format!(
            "network expects {} channels, image has {}",
            net.io_channels(),
            y.channels()
        )));
    }
    let dip_input = match cfg.objective {
        Objective::Dip => baseline_input(y, cfg),
        _ => y.clone(),
    };
    let gaussian_gt = cfg.objective != Objective::Pure && cfg.sigma > 0.0;

    let mut opt = RAdam::new(net.params(), cfg.lr);
    let mut stopper = ZeroCrossing::new(cfg.stop_window);
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut ema: Option<Image> = None;
    let mut peak: Option<PeakIterate> = None;
    let mut stop_reason = StopReason::MaxIters;
    let mut last = None;

    for iter in 0..cfg.max_iters {
        let ev = evaluate(net, y, &dip_input, cfg, iter)?;
        if !ev.estimate.total.is_finite() || !ev.output.is_finite() {
            let trace = RunTrace {
                objective: cfg.objective,
                stop_iter: records.last().map_or(0, |r| r.iter),
                records,
                stop_reason: StopReason::NonFinite,
            };
            return Err(Error::NonFinite {
                iter,
                trace: Box::new(trace),
            });
        }
        let avg = ema_update(ema.as_ref(), &ev.output, cfg.ema_beta)?;

        let mut rec = TraceRecord {
            iter,
            total_loss: ev.estimate.total,
            data_fidelity: ev.estimate.data_fidelity,
            divergence_term: ev.estimate.divergence_term,
            df_mc: ev.df_mc,
            psnr_to_y: psnr(&ev.output, y, true)?,
            psnr_to_x: None,
            psnr_ema_to_x: None,
            df_gt: None,
        };
        if let Some(x) = x {
            let p = psnr(&ev.output, x, true)?;
            rec.psnr_to_x = Some(p);
            rec.psnr_ema_to_x = Some(psnr(&avg, x, true)?);
            if gaussian_gt {
                rec.df_gt = Some(df_gt(&ev.output, x, y, cfg.sigma)?);
            }
            if peak.as_ref().is_none_or(|b| p > b.psnr_to_x) {
                peak = Some(PeakIterate {
                    iter,
                    psnr_to_x: p,
                    output: ev.output.clone(),
                });
            }
        }
        records.push(rec);
        ema = Some(avg);

        let crossed = stopper.push(ev.estimate.total).is_some();
        if crossed && cfg.objective.self_stops() {
            stop_reason = StopReason::ZeroCrossing;
            last = Some(ev.output);
            break;
        }
        if iter + 1 == cfg.max_iters {
            last = Some(ev.output);
            break;
        }
        opt.step(net.params_mut(), &ev.grads);
    }

    let trace = RunTrace {
        objective: cfg.objective,
        stop_iter: records.last().map_or(0, |r| r.iter),
        records,
        stop_reason,
    };
    Ok(DenoiseResult {
        output_last: last.expect("max_iters >= 1"),
        output_ema: ema.expect("max_iters >= 1"),
        trace,
        peak,
    })
}

/// Plain least-squares fit (`dip`) run to `cfg.max_iters`, with the peak
/// iterate by PSNR to `x` kept as the oracle-stopped reference.
pub fn run_baseline_dip(
    net: &mut DenoiserNetwork,
    y: &Image,
    cfg: &RunConfig,
    x: Option<&Image>,
) -> Result<DenoiseResult> {
    let x = x.ok_or_else(|| Error::Config("the dip baseline needs a ground-truth image".into()))?;
    let cfg = RunConfig {
        objective: Objective::Dip,
        ..cfg.clone()
    };
    optimize(net, y, &cfg, Some(x))
}
