use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use dipstop_core::diagnostics::{build_named_bundle, crossing_report, export_curves, CurveFormat};
use dipstop_core::RunTrace;

use crate::{CliError, EXIT_OK};

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    /// Glob over trace files (NDJSON, or CSV by extension); runs are named by file stem.
    #[arg(long)]
    pub traces: String,
    #[arg(long)]
    pub out: PathBuf,
    /// `csv` or `svg-plot`.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

pub fn read_trace(path: &Path) -> Result<RunTrace, CliError> {
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let trace = if csv {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        RunTrace::from_csv(&text)
    } else {
        let file = File::open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        RunTrace::read_ndjson(BufReader::new(file))
    };
    trace.map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

pub fn run(args: &CurvesArgs) -> Result<i32, CliError> {
    let format: CurveFormat = args.format.parse().map_err(|e: dipstop_core::Error| CliError::usage(e.to_string()))?;
    let pattern = glob::glob(&args.traces).map_err(|e| CliError::usage(format!("bad glob `{}`: {e}", args.traces)))?;
    let mut paths: Vec<PathBuf> = pattern.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no trace files match `{}`", args.traces)));
    }
    let traces = paths.iter().map(|p| read_trace(p)).collect::<Result<Vec<_>, _>>()?;
    let named = paths
        .iter()
        .zip(&traces)
        .map(|(p, t)| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (stem, t)
        })
        .collect();
    let bundle = build_named_bundle(named)?;
    let crossing = match crossing_report(&bundle) {
        Ok(c) => Some(c),
        Err(e) => {
            eprintln!("note: no crossing report ({e})");
            None
        }
    };
    export_curves(&bundle, &args.out, format, crossing.as_ref())?;
    println!("wrote {} runs to {}", bundle.runs.len(), args.out.display());
    if let Some(c) = &crossing {
        println!(
            "crossing: intersection_iter={} dip_peak_iter={} gap={}",
            c.intersection_iter.map_or("none".into(), |v| format!("{v:.1}")),
            c.dip_peak_iter,
            c.gap.map_or("none".into(), |v| format!("{v:.1}")),
        );
    }
    Ok(EXIT_OK)
}
