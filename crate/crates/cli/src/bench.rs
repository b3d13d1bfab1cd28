use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;
use dipstop_core::image::{add_noise, generate_phantom, load_image, NoiseSpec, PhantomKind};
use dipstop_core::optimizer::StopReason;
use dipstop_core::{optimize, DenoiserNetwork, Image, Objective, QualityReport};
use serde::{Deserialize, Serialize};

use crate::settings::{num, parse_level, parse_list, NoiseModel, Settings, SettingsError};
use crate::{layered, CliError, ModelFlags, EXIT_OK, EXIT_ROW_FAILED};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// `phantoms` or `dir:PATH` (PNG, PGM and PPM files).
    #[arg(long, default_value = "phantoms")]
    pub corpus: String,
    /// Gaussian levels, e.g. `15/255,25/255`.
    #[arg(long)]
    pub sigmas: Option<String>,
    /// Poisson scales, e.g. `0.1,0.2`.
    #[arg(long)]
    pub zetas: Option<String>,
    #[arg(long, default_value = "dip,dip_sure,ste")]
    pub methods: String,
    #[arg(long, default_value = "0")]
    pub seeds: String,
    /// Report path; `.csv`, `.json` and `.aggregate.csv` files share its stem.
    #[arg(long)]
    pub report: PathBuf,
    /// Side length of the generated phantoms.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Channel count of the generated phantoms.
    #[arg(long, default_value_t = 1)]
    pub image_channels: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Gaussian(f64),
    Poisson(f64),
}

impl Level {
    pub fn noise_name(self) -> &'static str {
        match self {
            Level::Gaussian(_) => "gaussian",
            Level::Poisson(_) => "poisson",
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Level::Gaussian(v) | Level::Poisson(v) => v,
        }
    }

    pub fn supports(self, method: Objective) -> bool {
        match self {
            Level::Gaussian(_) => method != Objective::Pure,
            Level::Poisson(_) => matches!(method, Objective::Dip | Objective::Pure),
        }
    }
}

/// One grid cell's outcome. All PSNR/SSIM values are against the clean image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub image_id: String,
    pub noise: String,
    pub level: f64,
    pub method: String,
    pub noise_seed: u64,
    pub net_seed: u64,
    pub run_seed: u64,
    /// The method's returned image: last iterate for `dip`, running average otherwise.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub psnr_ema: Option<f64>,
    pub psnr_last: Option<f64>,
    /// Best iterate in hindsight; only attainable with the clean image.
    pub psnr_oracle_peak: Option<f64>,
    pub peak_iter: Option<usize>,
    /// Returned-image PSNR when the run stopped on its own.
    pub psnr_auto_stop: Option<f64>,
    pub stop_iter: Option<usize>,
    pub stop_reason: Option<String>,
    pub wall_time_s: f64,
    pub status: String,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub noise: String,
    pub level: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_psnr: Option<f64>,
    pub median_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    pub median_ssim: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    /// Effective settings shared by every cell; noise, level, method and seed vary per row.
    pub config: BTreeMap<String, String>,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<AggregateRow>,
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Groups rows by method, noise model and level, in first-seen order.
pub fn aggregate(rows: &[BenchRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<((String, String, f64), Vec<&BenchRow>)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.noise.clone(), r.level);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((method, noise, level), g)| {
            let ok: Vec<&&BenchRow> = g.iter().filter(|r| r.ok()).collect();
            let psnr: Vec<f64> = ok.iter().filter_map(|r| r.psnr).collect();
            let ssim: Vec<f64> = ok.iter().filter_map(|r| r.ssim).collect();
            AggregateRow {
                method,
                noise,
                level,
                n_ok: ok.len(),
                n_failed: g.len() - ok.len(),
                mean_psnr: mean(&psnr),
                median_psnr: median(&psnr),
                mean_ssim: mean(&ssim),
                median_ssim: median(&ssim),
            }
        })
        .collect()
}

/// Runs one cell. The noise draw, network initialization and optimizer draws
/// all use `seed`, so the row is reproduced by calling this again.
pub fn run_cell(image_id: &str, x: &Image, level: Level, method: Objective, seed: u64, base: &Settings) -> BenchRow {
    let start = Instant::now();
    let mut row = BenchRow {
        image_id: image_id.to_string(),
        noise: level.noise_name().to_string(),
        level: level.value(),
        method: method.name().to_string(),
        noise_seed: seed,
        net_seed: seed,
        run_seed: seed,
        psnr: None,
        ssim: None,
        psnr_ema: None,
        psnr_last: None,
        psnr_oracle_peak: None,
        peak_iter: None,
        psnr_auto_stop: None,
        stop_iter: None,
        stop_reason: None,
        wall_time_s: 0.0,
        status: "ok".into(),
        error: None,
    };
    if let Err(e) = fill_cell(&mut row, x, level, method, seed, base) {
        row.status = "failed".into();
        row.error = Some(e.to_string());
        if let dipstop_core::Error::NonFinite { iter, .. } = e {
            row.stop_iter = Some(iter);
            row.stop_reason = Some(StopReason::NonFinite.name().into());
        }
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

fn fill_cell(
    row: &mut BenchRow,
    x: &Image,
    level: Level,
    method: Objective,
    seed: u64,
    base: &Settings,
) -> dipstop_core::Result<()> {
    let mut cfg = base.run.clone();
    cfg.objective = method;
    cfg.seed = seed;
    let spec = match level {
        Level::Gaussian(sigma) => {
            cfg.sigma = sigma;
            NoiseSpec::gaussian(sigma, seed)
        }
        Level::Poisson(zeta) => {
            cfg.sigma = 0.0;
            cfg.zeta = zeta;
            NoiseSpec::poisson(zeta, seed)
        }
    };
    let y = add_noise(x, &spec)?;
    let mut net = DenoiserNetwork::new(base.arch.clone(), x.channels(), seed)?;
    let res = optimize(&mut net, &y, &cfg, Some(x))?;

    let returned = if method == Objective::Dip { &res.output_last } else { &res.output_ema };
    let q = QualityReport::measure(returned, x)?;
    row.psnr = Some(q.psnr_db);
    row.ssim = Some(q.ssim);
    row.psnr_ema = Some(QualityReport::measure(&res.output_ema, x)?.psnr_db);
    row.psnr_last = Some(QualityReport::measure(&res.output_last, x)?.psnr_db);
    if let Some(p) = &res.peak {
        row.psnr_oracle_peak = Some(p.psnr_to_x);
        row.peak_iter = Some(p.iter);
    }
    if res.trace.stop_reason == StopReason::ZeroCrossing {
        row.psnr_auto_stop = Some(q.psnr_db);
    }
    row.stop_iter = Some(res.trace.stop_iter);
    row.stop_reason = Some(res.trace.stop_reason.name().into());
    Ok(())
}

pub fn load_corpus(spec: &str, size: usize, channels: usize) -> Result<Vec<(String, Image)>, CliError> {
    if spec == "phantoms" {
        return PhantomKind::ALL
            .into_iter()
            .map(|k| Ok((k.name().to_string(), generate_phantom(k, size, size, channels, 0)?)))
            .collect();
    }
    let Some(dir) = spec.strip_prefix("dir:") else {
        return Err(CliError::usage(format!("--corpus must be `phantoms` or `dir:PATH`, got `{spec}`")));
    };
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("{dir}: {e}")))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no PNG/PGM/PPM images in {dir}")));
    }
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((id, load_image(&p)?))
        })
        .collect()
}

/// Worker count: `DIPSTOP_THREADS` if set, else the available parallelism.
pub fn pool_width() -> Result<usize, CliError> {
    match std::env::var("DIPSTOP_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::usage(format!("DIPSTOP_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

struct Cell {
    image: usize,
    level: Level,
    method: Objective,
    seed: u64,
}

/// Runs every cell on `threads` workers; rows come back in grid order.
pub fn run_grid(
    images: &[(String, Image)],
    levels: &[Level],
    methods: &[Objective],
    seeds: &[u64],
    base: &Settings,
    threads: usize,
) -> Vec<BenchRow> {
    let mut cells = Vec::new();
    for (i, _) in images.iter().enumerate() {
        for &level in levels {
            for &method in methods.iter().filter(|&&m| level.supports(m)) {
                for &seed in seeds {
                    cells.push(Cell { image: i, level, method, seed });
                }
            }
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; cells.len()]);
    let total = cells.len();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, total.max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(c) = cells.get(k) else { break };
                let (id, x) = &images[c.image];
                let row = run_cell(id, x, c.level, c.method, c.seed, base);
                eprintln!(
                    "[{}/{total}] {id} {} {:.4} {} seed={} psnr={} stop={}",
                    k + 1,
                    row.noise,
                    row.level,
                    row.method,
                    row.run_seed,
                    row.psnr.map_or("-".into(), |p| format!("{p:.2}")),
                    row.stop_iter.map_or("-".into(), |i| i.to_string()),
                );
                slots.lock().expect("no worker panics while holding the lock")[k] = Some(row);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

/// `<stem>.csv`, `<stem>.json` and `<stem>.aggregate.csv` for a report path.
pub fn report_paths(report: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let ext = report.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let stem = match ext.as_deref() {
        Some("csv") | Some("json") => report.with_extension(""),
        _ => report.to_path_buf(),
    };
    let with = |suffix: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    (with(".csv"), with(".json"), with(".aggregate.csv"))
}

fn csv_with_header<T: Serialize>(path: &Path, header: &str, items: &[T]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::io(format!("{}: {e}", path.display()));
    let mut file = BufWriter::new(File::create(path).map_err(io)?);
    file.write_all(header.as_bytes()).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    for item in items {
        w.serialize(item).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn write_report(report: &BenchmarkReport, path: &Path) -> Result<(), CliError> {
    let (rows_csv, json, agg_csv) = report_paths(path);
    let mut header = format!("# dipstop bench report schema_version={}\n", report.schema_version);
    for (k, v) in &report.config {
        header.push_str(&format!("# {k} = {v}\n"));
    }
    csv_with_header(&rows_csv, &header, &report.rows)?;
    csv_with_header(&agg_csv, &header, &report.aggregates)?;
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::io(e.to_string()))?;
    fs::write(&json, text + "\n").map_err(|e| CliError::io(format!("{}: {e}", json.display())))?;
    Ok(())
}

/// Reads the row CSV written by [`write_report`].
pub fn read_rows_csv(text: &str) -> Result<Vec<BenchRow>, CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize()
        .collect::<Result<Vec<BenchRow>, _>>()
        .map_err(|e| CliError::io(format!("bad report rows: {e}")))
}

pub fn run(args: &BenchArgs) -> Result<i32, CliError> {
    let base = layered(args.config.as_ref(), None, &args.model)?.resolve()?;
    let methods = parse_list(&args.methods, |s| s.parse::<Objective>().map_err(|e| SettingsError(e.to_string())))?;
    let seeds = parse_list(&args.seeds, |s| {
        s.parse::<u64>().map_err(|_| SettingsError(format!("bad seed `{s}`")))
    })?;
    let mut levels = Vec::new();
    if let Some(s) = &args.sigmas {
        levels.extend(parse_list(s, parse_level)?.into_iter().map(Level::Gaussian));
    }
    if let Some(z) = &args.zetas {
        for v in parse_list(z, |s| num::<f64>("zeta", s))? {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::usage(format!("zeta must be > 0, got {v}")));
            }
            levels.push(Level::Poisson(v));
        }
    }
    if levels.is_empty() {
        levels.push(match base.noise {
            NoiseModel::Gaussian => Level::Gaussian(base.run.sigma),
            NoiseModel::Poisson => Level::Poisson(base.run.zeta),
        });
    }
    if !levels.iter().any(|l| methods.iter().any(|&m| l.supports(m))) {
        return Err(CliError::usage("no method applies to the requested noise levels"));
    }
    if args.size == 0 || !matches!(args.image_channels, 1 | 3) {
        return Err(CliError::usage("--size must be positive and --image-channels 1 or 3"));
    }
    let images = load_corpus(&args.corpus, args.size, args.image_channels)?;
    let threads = pool_width()?;

    let rows = run_grid(&images, &levels, &methods, &seeds, &base, threads);
    let mut config = base.echo_map();
    for k in ["noise", "sigma", "zeta", "objective", "seed"] {
        config.remove(k);
    }
    config.insert("corpus".into(), args.corpus.clone());
    let report = BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config,
        aggregates: aggregate(&rows),
        rows,
    };
    write_report(&report, &args.report)?;
    for a in &report.aggregates {
        println!(
            "{} {} {:.4}: n={} failed={} median_psnr={} median_ssim={}",
            a.method,
            a.noise,
            a.level,
            a.n_ok,
            a.n_failed,
            a.median_psnr.map_or("-".into(), |v| format!("{v:.2}")),
            a.median_ssim.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("error: {failed} of {} rows failed", report.rows.len());
        return Ok(EXIT_ROW_FAILED);
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, psnr: f64, ok: bool) -> BenchRow {
        BenchRow {
            image_id: "a".into(),
            noise: "gaussian".into(),
            level: 0.1,
            method: method.into(),
            noise_seed: 0,
            net_seed: 0,
            run_seed: 0,
            psnr: ok.then_some(psnr),
            ssim: ok.then_some(psnr / 100.0),
            psnr_ema: None,
            psnr_last: None,
            psnr_oracle_peak: None,
            peak_iter: None,
            psnr_auto_stop: None,
            stop_iter: None,
            stop_reason: None,
            wall_time_s: 0.0,
            status: if ok { "ok" } else { "failed" }.into(),
            error: None,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(mean(&[1.0, 2.0]), Some(1.5));
    }

    #[test]
    fn aggregates_skip_failed_rows() {
        let rows = vec![row("ste", 20.0, true), row("dip", 10.0, true), row("ste", 30.0, true), row("ste", 99.0, false)];
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].method, "ste");
        assert_eq!((a[0].n_ok, a[0].n_failed), (2, 1));
        assert_eq!(a[0].mean_psnr, Some(25.0));
        assert_eq!(a[1].median_psnr, Some(10.0));
    }

    #[test]
    fn report_path_stems() {
        let (a, b, c) = report_paths(Path::new("out/r.json"));
        assert_eq!(a, Path::new("out/r.csv"));
        assert_eq!(b, Path::new("out/r.json"));
        assert_eq!(c, Path::new("out/r.aggregate.csv"));
        assert_eq!(report_paths(Path::new("r")).0, Path::new("r.csv"));
    }

    #[test]
    fn methods_match_noise_models() {
        assert!(Level::Gaussian(0.1).supports(Objective::Ste));
        assert!(!Level::Gaussian(0.1).supports(Objective::Pure));
        assert!(Level::Poisson(0.1).supports(Objective::Dip));
        assert!(!Level::Poisson(0.1).supports(Objective::DipSure));
    }
}
