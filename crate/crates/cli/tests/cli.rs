use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dipstop_cli::bench::{read_rows_csv, run_cell, BenchmarkReport, Level};
use dipstop_cli::settings::Layers;
use dipstop_core::image::{add_gaussian_noise, generate_phantom, save_image, BitDepth, PhantomKind};
use dipstop_core::Objective;
use tempfile::TempDir;

const SMALL: &[&str] = &["--depth", "2", "--channels", "6", "--skip-channels", "2"];

fn dipstop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipstop"))
        .args(args)
        .env("DIPSTOP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a clean 32x32 phantom and its noisy version.
fn images(dir: &TempDir) -> (PathBuf, PathBuf) {
    let x = generate_phantom(PhantomKind::Disks, 32, 32, 1, 3).unwrap();
    let y = add_gaussian_noise(&x, 25.0 / 255.0, 9).unwrap();
    let (xp, yp) = (dir.path().join("clean.png"), dir.path().join("noisy.png"));
    save_image(&x, &xp, BitDepth::Eight).unwrap();
    save_image(&y, &yp, BitDepth::Eight).unwrap();
    (xp, yp)
}

fn denoise(dir: &TempDir, extra: &[&str], tag: &str) -> (Output, PathBuf, PathBuf) {
    let (xp, yp) = images(dir);
    let out = dir.path().join(format!("{tag}.png"));
    let trace = dir.path().join(format!("{tag}.ndjson"));
    let mut args = vec![
        "denoise", "--input", s(&yp), "--output", s(&out), "--gt", s(&xp), "--trace", s(&trace),
        "--max-iters", "25",
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    (dipstop(&args), out, trace)
}

#[test]
fn denoise_writes_output_and_trace() {
    let dir = TempDir::new().unwrap();
    let (o, out, trace) = denoise(&dir, &["--noise", "gaussian", "--sigma", "25/255", "--objective", "ste"], "a");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());
    let text = fs::read_to_string(&trace).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.contains("\"stop_reason\""), "{first}");
    let t = dipstop_core::RunTrace::from_ndjson(&text).unwrap();
    assert_eq!(t.objective, Objective::Ste);
    assert!(t.records[0].df_gt.is_some());
}

#[test]
fn denoise_is_bitwise_repeatable() {
    let dir = TempDir::new().unwrap();
    let flags = ["--objective", "dip_sure", "--seed", "4"];
    let (o1, out1, tr1) = denoise(&dir, &flags, "first");
    let (o2, out2, tr2) = denoise(&dir, &flags, "second");
    assert_eq!((code(&o1), code(&o2)), (0, 0));
    assert_eq!(fs::read(out1).unwrap(), fs::read(out2).unwrap());
    assert_eq!(fs::read(tr1).unwrap(), fs::read(tr2).unwrap());
}

#[test]
fn sigma_with_poisson_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let (o, out, _) = denoise(&dir, &["--noise", "poisson", "--sigma", "0.1"], "p");
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn poisson_run_defaults_to_pure() {
    let dir = TempDir::new().unwrap();
    let (o, _, trace) = denoise(&dir, &["--noise", "poisson", "--zeta", "0.1"], "q");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = dipstop_core::RunTrace::from_ndjson(&fs::read_to_string(trace).unwrap()).unwrap();
    assert_eq!(t.objective, Objective::Pure);
    assert!(t.records.iter().all(|r| r.df_gt.is_none()));
}

#[test]
fn bad_flags_and_missing_files() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&dipstop(&["denoise", "--bogus"])), 2);
    assert_eq!(code(&dipstop(&["frobnicate"])), 2);
    let (o, _, _) = denoise(&dir, &["--objective", "nonsense"], "b");
    assert_eq!(code(&o), 2);
    let (o, _, _) = denoise(&dir, &["--sigma", "25"], "c");
    assert_eq!(code(&o), 2);
    let missing = dir.path().join("missing.png");
    let out = dir.path().join("o.png");
    assert_eq!(code(&dipstop(&["denoise", "--input", s(&missing), "--output", s(&out)])), 3);
}

#[test]
fn divergent_run_exits_with_non_finite() {
    let dir = TempDir::new().unwrap();
    let (o, out, trace) = denoise(&dir, &["--objective", "dip", "--lr", "1e200", "--norm", "none"], "nf");
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    let t = dipstop_core::RunTrace::from_ndjson(&fs::read_to_string(trace).unwrap()).unwrap();
    assert_eq!(t.stop_reason, dipstop_core::optimizer::StopReason::NonFinite);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "lr = 0.05\nmax_iters = 7\n").unwrap();
    let o = dipstop(&["config", "show", "--config", s(&cfg), "--lr", "0.2"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("lr = 0.2\n"), "{text}");
    assert!(text.contains("max_iters = 7\n"), "{text}");

    fs::write(&cfg, "learning_rate = 0.05\n").unwrap();
    assert_eq!(code(&dipstop(&["config", "show", "--config", s(&cfg)])), 2);
    assert_eq!(code(&dipstop(&["config", "show", "--config", s(&dir.path().join("nope"))])), 3);
    assert_eq!(code(&dipstop(&["config", "keys"])), 0);
}

fn bench(dir: &TempDir, methods: &str, extra: &[&str]) -> (Output, BenchmarkReport, String) {
    let report = dir.path().join("report.json");
    let mut args = vec![
        "bench", "--corpus", "phantoms", "--size", "16", "--methods", methods, "--seeds", "1", "--report",
        s(&report), "--max-iters", "15",
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = dipstop(&args);
    let json: BenchmarkReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let rows_csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    (o, json, rows_csv)
}

#[test]
fn bench_single_method_gives_one_aggregate() {
    let dir = TempDir::new().unwrap();
    let (o, report, rows_csv) = bench(&dir, "ste", &["--sigmas", "15/255"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report.aggregates.len(), 1);
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.aggregates[0].n_ok, 4);
    assert_eq!(report.config["lr"], "0.1");
    assert!(rows_csv.contains("# max_iters = 15\n"));
    assert!(dir.path().join("report.aggregate.csv").exists());

    // Rows in the CSV match the JSON and re-running a cell reproduces it.
    let rows = read_rows_csv(&rows_csv).unwrap();
    assert_eq!(rows.len(), 4);
    let mut layers = Layers::defaults();
    for (k, v) in [("max_iters", "15"), ("depth", "2"), ("channels", "6"), ("skip_channels", "2")] {
        layers.set(k, v, true).unwrap();
    }
    let base = layers.resolve().unwrap();
    let r = &report.rows[2];
    let x = generate_phantom(r.image_id.parse().unwrap(), 16, 16, 1, 0).unwrap();
    let again = run_cell(&r.image_id, &x, Level::Gaussian(r.level), Objective::Ste, r.run_seed, &base);
    assert!((again.psnr.unwrap() - r.psnr.unwrap()).abs() <= 1e-9);
    assert!((rows[2].psnr.unwrap() - r.psnr.unwrap()).abs() <= 1e-9);
}

#[test]
fn bench_reports_oracle_and_auto_stop_columns() {
    let dir = TempDir::new().unwrap();
    let (o, report, rows_csv) = bench(&dir, "dip,ste", &["--sigmas", "25/255", "--zetas", "0.2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = rows_csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.contains("psnr_oracle_peak") && header.contains("psnr_auto_stop"));
    let dip: Vec<_> = report.rows.iter().filter(|r| r.method == "dip").collect();
    assert!(dip.iter().all(|r| r.psnr_oracle_peak.is_some() && r.psnr_oracle_peak >= r.psnr));
    // gaussian: dip + ste, poisson: dip only
    assert_eq!(report.rows.len(), 4 * 3);
    assert_eq!(report.aggregates.len(), 3);
}

#[test]
fn bench_failures_are_recorded_per_row() {
    let dir = TempDir::new().unwrap();
    let (o, report, _) = bench(&dir, "dip", &["--sigmas", "0.1", "--lr", "1e200", "--norm", "none"]);
    assert_eq!(code(&o), 5);
    assert!(report.rows.iter().any(|r| r.status == "failed" && r.error.is_some()));
}

fn write_trace(dir: &TempDir, objective: &str, name: &str) -> PathBuf {
    let (o, _, trace) = denoise(dir, &["--objective", objective, "--max-iters", "40"], name);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    trace
}

#[test]
fn curves_exports_and_embeds_crossing() {
    let dir = TempDir::new().unwrap();
    write_trace(&dir, "dip", "dip");
    let out = dir.path().join("one.csv");
    let one = dir.path().join("dip.ndjson");
    assert_eq!(code(&dipstop(&["curves", "--traces", s(&one), "--out", s(&out), "--format", "csv"])), 0);
    assert!(out.exists());

    write_trace(&dir, "ste", "ste");
    let glob = format!("{}/*.ndjson", s(dir.path()));
    let out = dir.path().join("both.csv");
    assert_eq!(code(&dipstop(&["curves", "--traces", &glob, "--out", s(&out)])), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# crossing dip=dip ste=ste")), "{text}");

    let svg = dir.path().join("both.svg");
    assert_eq!(code(&dipstop(&["curves", "--traces", &glob, "--out", s(&svg), "--format", "svg-plot"])), 0);
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn curves_without_matches_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let glob = format!("{}/*.ndjson", s(dir.path()));
    let out = dir.path().join("x.csv");
    assert_eq!(code(&dipstop(&["curves", "--traces", &glob, "--out", s(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(code(&dipstop(&["curves", "--traces", "[", "--out", s(&out)])), 2);
}
