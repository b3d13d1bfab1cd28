use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::bundle::{RunSeries, Series, TrajectoryBundle};
use super::crossing::CrossingReport;
use crate::error::{Error, Result};
use crate::optimizer::{Objective, StopReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    SvgPlot,
}

impl FromStr for CurveFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(CurveFormat::Csv),
            "svg-plot" | "svg" => Ok(CurveFormat::SvgPlot),
            _ => Err(Error::Argument(format!("unknown curve format {s:?}"))),
        }
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// CSV layout: `#`-prefixed metadata lines (one `run` line per run, then an
/// optional `crossing` line), a header `iter,<run>:<series>,...` with runs in
/// bundle order and series in [`Series::ALL`] order, then one row per grid
/// iteration. Empty cells mean "not logged"; series a run never logged get
/// no column at all.
pub fn bundle_to_csv(bundle: &TrajectoryBundle, crossing: Option<&CrossingReport>) -> String {
    let mut out = String::new();
    for r in &bundle.runs {
        let last = r.last_iter.map_or("none".to_string(), |l| l.to_string());
        writeln!(
            out,
            "# run name={} objective={} stop_iter={} stop_reason={} last_iter={}",
            r.name, r.objective, r.stop_iter, r.stop_reason, last
        )
        .unwrap();
    }
    if let Some(c) = crossing {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), fmt17);
        writeln!(
            out,
            "# crossing dip={} ste={} intersection_iter={} dip_peak_iter={} dip_peak_psnr={} gap={}",
            c.dip_run,
            c.ste_run,
            opt(c.intersection_iter),
            c.dip_peak_iter,
            fmt17(c.dip_peak_psnr),
            opt(c.gap)
        )
        .unwrap();
    }
    let columns: Vec<(&RunSeries, Series, &[Option<f64>])> = bundle
        .runs
        .iter()
        .flat_map(|r| r.series.iter().map(move |(&s, v)| (r, s, v.as_slice())))
        .collect();
    out.push_str("iter");
    for (r, s, _) in &columns {
        write!(out, ",{}:{}", r.name, s).unwrap();
    }
    out.push('\n');
    for (k, it) in bundle.grid.iter().enumerate() {
        write!(out, "{it}").unwrap();
        for (_, _, v) in &columns {
            out.push(',');
            if let Some(x) = v[k] {
                out.push_str(&fmt17(x));
            }
        }
        out.push('\n');
    }
    out
}

fn meta_map(line: &str) -> BTreeMap<&str, &str> {
    line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
}

fn field<'a>(m: &BTreeMap<&str, &'a str>, k: &str) -> Result<&'a str> {
    m.get(k)
        .copied()
        .ok_or_else(|| Error::Format(format!("metadata lacks {k}")))
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("bad number {s:?}")))
}

/// Inverse of [`bundle_to_csv`] (the crossing line is ignored).
pub fn bundle_from_csv(text: &str) -> Result<TrajectoryBundle> {
    let mut runs = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next_if(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        let Some(rest) = body.strip_prefix("run ") else {
            continue;
        };
        let m = meta_map(rest);
        let last = field(&m, "last_iter")?;
        runs.push(RunSeries {
            name: field(&m, "name")?.to_string(),
            objective: field(&m, "objective")?.parse::<Objective>()?,
            stop_iter: parse_num(field(&m, "stop_iter")?)?,
            stop_reason: field(&m, "stop_reason")?.parse::<StopReason>()?,
            last_iter: if last == "none" { None } else { Some(parse_num(last)?) },
            series: BTreeMap::new(),
        });
    }
    let header = lines.next().ok_or_else(|| Error::Format("curve csv has no header".into()))?;
    let mut cols = header.split(',');
    if cols.next() != Some("iter") {
        return Err(Error::Format("curve csv must start with an iter column".into()));
    }
    let mut targets = Vec::new();
    for c in cols {
        let (name, s) = c
            .rsplit_once(':')
            .ok_or_else(|| Error::Format(format!("bad column {c:?}")))?;
        let idx = runs
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::Format(format!("column for unknown run {name:?}")))?;
        targets.push((idx, s.parse::<Series>()?));
    }
    let mut grid = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); targets.len()];
    for line in lines.filter(|l| !l.is_empty()) {
        let mut parts = line.split(',');
        grid.push(parse_num::<usize>(parts.next().unwrap_or(""))?);
        let values: Vec<&str> = parts.collect();
        if values.len() != targets.len() {
            return Err(Error::Format(format!("row for iter {} has the wrong width", grid.last().unwrap())));
        }
        for (col, v) in cells.iter_mut().zip(values) {
            col.push(if v.is_empty() { None } else { Some(parse_num::<f64>(v)?) });
        }
    }
    for ((idx, s), col) in targets.into_iter().zip(cells) {
        runs[idx].series.insert(s, col);
    }
    Ok(TrajectoryBundle { grid, runs })
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 180.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 40.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Stacked panels sharing the iteration axis, one per logged series, with
/// one dashed stop marker per run spanning all panels.
pub fn bundle_to_svg(bundle: &TrajectoryBundle, crossing: Option<&CrossingReport>) -> String {
    let series = bundle.present_series();
    let n_panels = series.len().max(1);
    let height = MARGIN_T + n_panels as f64 * (PANEL_H + GAP) + 20.0 * bundle.runs.len() as f64;
    let width = MARGIN_L + PANEL_W + MARGIN_R;
    let (x_min, x_max) = match (bundle.grid.first(), bundle.grid.last()) {
        (Some(&a), Some(&b)) if b > a => (a as f64, b as f64),
        (Some(&a), _) => (a as f64, a as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let px = |it: f64| MARGIN_L + (it - x_min) / (x_max - x_min) * PANEL_W;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    if let Some(c) = crossing {
        let it = c.intersection_iter.map_or("none".into(), |v| format!("{v:.1}"));
        writeln!(
            s,
            r#"<text x="{MARGIN_L}" y="20">df_gt intersection: {it}; dip peak PSNR at {}</text>"#,
            c.dip_peak_iter
        )
        .unwrap();
    }
    for (p, ser) in series.iter().enumerate() {
        let top = MARGIN_T + p as f64 * (PANEL_H + GAP);
        let finite: Vec<f64> = bundle
            .runs
            .iter()
            .filter_map(|r| r.get(*ser))
            .flat_map(|v| v.iter().flatten().copied())
            .filter(|v| v.is_finite())
            .collect();
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        };
        let py = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;
        writeln!(s, r#"<g class="panel" data-series="{ser}">"#).unwrap();
        writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
        )
        .unwrap();
        writeln!(s, r#"<text x="{MARGIN_L}" y="{}">{ser}</text>"#, top - 6.0).unwrap();
        writeln!(s, r#"<text x="4" y="{}">{}</text>"#, top + 10.0, format_tick(hi)).unwrap();
        writeln!(s, r#"<text x="4" y="{}">{}</text>"#, top + PANEL_H, format_tick(lo)).unwrap();
        if lo < 0.0 && hi > 0.0 {
            let z = py(0.0);
            writeln!(
                s,
                r##"<line x1="{MARGIN_L}" y1="{z:.2}" x2="{}" y2="{z:.2}" stroke="#ccc"/>"##,
                MARGIN_L + PANEL_W
            )
            .unwrap();
        }
        for (k, run) in bundle.runs.iter().enumerate() {
            let Some(values) = run.get(*ser) else { continue };
            let color = PALETTE[k % PALETTE.len()];
            let mut segment: Vec<String> = Vec::new();
            let flush = |seg: &mut Vec<String>, s: &mut String| {
                if seg.len() > 1 {
                    writeln!(
                        s,
                        r#"<polyline class="curve" data-run="{}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                        esc(&run.name),
                        seg.join(" ")
                    )
                    .unwrap();
                }
                seg.clear();
            };
            for (it, v) in bundle.grid.iter().zip(values) {
                match v {
                    Some(v) if v.is_finite() => segment.push(format!("{:.2},{:.2}", px(*it as f64), py(*v))),
                    _ => flush(&mut segment, &mut s),
                }
            }
            flush(&mut segment, &mut s);
        }
        writeln!(s, "</g>").unwrap();
    }
    let bottom = MARGIN_T + n_panels as f64 * (PANEL_H + GAP) - GAP;
    writeln!(
        s,
        r#"<text x="{MARGIN_L}" y="{}">iteration {x_min}</text><text x="{}" y="{}" text-anchor="end">{x_max}</text>"#,
        bottom + 14.0,
        MARGIN_L + PANEL_W,
        bottom + 14.0
    )
    .unwrap();
    for (k, run) in bundle.runs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let x = px(run.stop_iter as f64);
        writeln!(
            s,
            r#"<g class="stop-marker" data-run="{name}"><line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{bottom}" stroke="{color}" stroke-dasharray="4 3"/><text x="{x:.2}" y="{}" fill="{color}">{name} stop {} ({})</text></g>"#,
            bottom + 28.0 + 14.0 * k as f64,
            run.stop_iter,
            run.stop_reason,
            name = esc(&run.name),
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn export_curves(
    bundle: &TrajectoryBundle,
    path: &Path,
    format: CurveFormat,
    crossing: Option<&CrossingReport>,
) -> Result<()> {
    let text = match format {
        CurveFormat::Csv => bundle_to_csv(bundle, crossing),
        CurveFormat::SvgPlot => bundle_to_svg(bundle, crossing),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
