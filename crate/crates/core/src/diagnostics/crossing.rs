use serde::{Deserialize, Serialize};

use super::bundle::{RunSeries, Series, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::optimizer::Objective;

/// Where the baseline's degrees-of-freedom curve meets the self-stopping
/// run's, compared with the baseline's best-PSNR iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub dip_run: String,
    pub ste_run: String,
    /// Interpolated iteration at which dip's df_gt first reaches ste's;
    /// `None` if it never does.
    pub intersection_iter: Option<f64>,
    pub dip_peak_iter: usize,
    pub dip_peak_psnr: f64,
    /// `intersection_iter - dip_peak_iter`.
    pub gap: Option<f64>,
}

impl CrossingReport {
    /// `|gap| / dip_peak_iter`.
    pub fn relative_gap(&self) -> Option<f64> {
        self.gap.map(|g| g.abs() / (self.dip_peak_iter.max(1) as f64))
    }
}

fn single(bundle: &TrajectoryBundle, objective: Objective) -> Result<&RunSeries> {
    let mut found = bundle
        .runs
        .iter()
        .filter(|r| r.objective == objective && r.has(Series::DfGt));
    let first = found
        .next()
        .ok_or_else(|| Error::Capability(format!("bundle has no {objective} run with df_gt")))?;
    if found.next().is_some() {
        return Err(Error::Argument(format!("bundle has several {objective} runs with df_gt")));
    }
    Ok(first)
}

/// Points `(iter, value)` where the series is logged.
fn points(bundle: &TrajectoryBundle, values: &[Option<f64>]) -> Vec<(f64, f64)> {
    bundle
        .grid
        .iter()
        .zip(values)
        .filter_map(|(&i, v)| v.map(|v| (i as f64, v)))
        .collect()
}

/// Piecewise-linear value at `t`; held at the end values outside the range.
fn interpolate(pts: &[(f64, f64)], t: f64) -> f64 {
    match pts.iter().position(|&(i, _)| i >= t) {
        None => pts.last().expect("non-empty").1,
        Some(0) => pts[0].1,
        Some(k) => {
            let ((t0, v0), (t1, v1)) = (pts[k - 1], pts[k]);
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

/// Needs exactly one `dip` and one `ste` run with df_gt logged. The
/// intersection is the first point where `dip_df - ste_df >= 0`, with the
/// difference interpolated linearly between logged iterations; the `ste`
/// curve is held at its final value after that run has stopped.
pub fn crossing_report(bundle: &TrajectoryBundle) -> Result<CrossingReport> {
    let dip = single(bundle, Objective::Dip)?;
    let ste = single(bundle, Objective::Ste)?;
    let dip_df = points(bundle, dip.get(Series::DfGt).expect("checked"));
    let ste_df = points(bundle, ste.get(Series::DfGt).expect("checked"));
    let dip_psnr = dip
        .get(Series::PsnrToX)
        .map(|v| points(bundle, v))
        .filter(|p| !p.is_empty())
        .ok_or_else(|| Error::Capability("dip run has no psnr_to_x".into()))?;
    if dip_df.is_empty() || ste_df.is_empty() {
        return Err(Error::Capability("df_gt series are empty".into()));
    }

    let (mut peak_iter, mut peak) = dip_psnr[0];
    for &(i, p) in &dip_psnr[1..] {
        if p > peak {
            (peak_iter, peak) = (i, p);
        }
    }

    let diffs: Vec<(f64, f64)> = dip_df.iter().map(|&(t, d)| (t, d - interpolate(&ste_df, t))).collect();
    let intersection = diffs.iter().position(|&(_, f)| f >= 0.0).map(|k| match k {
        0 => diffs[0].0,
        _ => {
            let ((t0, f0), (t1, f1)) = (diffs[k - 1], diffs[k]);
            t0 + (t1 - t0) * (-f0) / (f1 - f0)
        }
    });

    Ok(CrossingReport {
        dip_run: dip.name.clone(),
        ste_run: ste.name.clone(),
        intersection_iter: intersection,
        dip_peak_iter: peak_iter as usize,
        dip_peak_psnr: peak,
        gap: intersection.map(|i| i - peak_iter),
    })
}
