use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::{Objective, RunTrace, StopReason, TraceRecord};

/// Per-iteration quantities carried by a bundle, in export order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Series {
    TotalLoss,
    DfMc,
    DfGt,
    PsnrToX,
    PsnrToY,
    PsnrEmaToX,
}

impl Series {
    pub const ALL: [Series; 6] = [
        Series::TotalLoss,
        Series::DfMc,
        Series::DfGt,
        Series::PsnrToX,
        Series::PsnrToY,
        Series::PsnrEmaToX,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Series::TotalLoss => "total_loss",
            Series::DfMc => "df_mc",
            Series::DfGt => "df_gt",
            Series::PsnrToX => "psnr_to_x",
            Series::PsnrToY => "psnr_to_y",
            Series::PsnrEmaToX => "psnr_ema_to_x",
        }
    }

    pub fn of(self, r: &TraceRecord) -> Option<f64> {
        match self {
            Series::TotalLoss => Some(r.total_loss),
            Series::DfMc => r.df_mc,
            Series::DfGt => r.df_gt,
            Series::PsnrToX => r.psnr_to_x,
            Series::PsnrToY => Some(r.psnr_to_y),
            Series::PsnrEmaToX => r.psnr_ema_to_x,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Series::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown series {s:?}")))
    }
}

/// One run resampled onto the bundle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub name: String,
    pub objective: Objective,
    pub stop_iter: usize,
    pub stop_reason: StopReason,
    /// Last logged iteration; grid points after it are marked ended.
    pub last_iter: Option<usize>,
    /// Only series the trace actually logged; values are `None` where the
    /// run has no record at that grid point.
    pub series: BTreeMap<Series, Vec<Option<f64>>>,
}

impl RunSeries {
    pub fn has(&self, s: Series) -> bool {
        self.series.contains_key(&s)
    }

    pub fn get(&self, s: Series) -> Option<&[Option<f64>]> {
        self.series.get(&s).map(Vec::as_slice)
    }

    pub fn ended_at(&self, iter: usize) -> bool {
        self.last_iter.is_none_or(|l| iter > l)
    }
}

/// Several runs aligned on the union of their logged iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub grid: Vec<usize>,
    pub runs: Vec<RunSeries>,
}

fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_-.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() {
        "run".into()
    } else {
        s
    }
}

/// Makes names unique by suffixing repeats with `-2`, `-3`, ... in order.
fn dedup(names: Vec<String>) -> Vec<String> {
    let mut taken = BTreeSet::new();
    names
        .into_iter()
        .map(|n| {
            let base = sanitize(&n);
            let mut candidate = base.clone();
            let mut k = 2;
            while taken.contains(&candidate) {
                candidate = format!("{base}-{k}");
                k += 1;
            }
            taken.insert(candidate.clone());
            candidate
        })
        .collect()
}

/// Bundles traces named after their objectives.
pub fn build_bundle(traces: &[RunTrace]) -> Result<TrajectoryBundle> {
    build_named_bundle(traces.iter().map(|t| (t.objective.name().to_string(), t)).collect())
}

pub fn build_named_bundle(traces: Vec<(String, &RunTrace)>) -> Result<TrajectoryBundle> {
    if traces.is_empty() {
        return Err(Error::Argument("cannot bundle an empty trace list".into()));
    }
    let grid: Vec<usize> = traces
        .iter()
        .flat_map(|(_, t)| t.records.iter().map(|r| r.iter))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let position: BTreeMap<usize, usize> = grid.iter().enumerate().map(|(i, &it)| (it, i)).collect();
    let names = dedup(traces.iter().map(|(n, _)| n.clone()).collect());
    let runs = traces
        .iter()
        .zip(names)
        .map(|((_, t), name)| {
            let mut series = BTreeMap::new();
            for s in Series::ALL {
                if t.records.iter().all(|r| s.of(r).is_none()) {
                    continue;
                }
                let mut values = vec![None; grid.len()];
                for r in &t.records {
                    values[position[&r.iter]] = s.of(r);
                }
                series.insert(s, values);
            }
            RunSeries {
                name,
                objective: t.objective,
                stop_iter: t.stop_iter,
                stop_reason: t.stop_reason,
                last_iter: t.records.last().map(|r| r.iter),
                series,
            }
        })
        .collect();
    Ok(TrajectoryBundle { grid, runs })
}

impl TrajectoryBundle {
    pub fn run(&self, name: &str) -> Option<&RunSeries> {
        self.runs.iter().find(|r| r.name == name)
    }

    /// Series present in at least one run, in export order.
    pub fn present_series(&self) -> Vec<Series> {
        Series::ALL
            .into_iter()
            .filter(|s| self.runs.iter().any(|r| r.has(*s)))
            .collect()
    }
}
