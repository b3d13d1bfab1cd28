use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use dipstop_core::image::{load_image, save_image, BitDepth};
use dipstop_core::{optimize, DenoiserNetwork, Error, Image, QualityReport, RunTrace};

use crate::settings::Settings;
use crate::{layered, CliError, ModelFlags, NoiseFlags, EXIT_OK};

#[derive(Debug, Clone, Args)]
pub struct DenoiseArgs {
    /// Noisy observation (PNG, PGM or PPM).
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the denoised image.
    #[arg(long)]
    pub output: PathBuf,
    /// Clean reference; enables PSNR to ground truth and df_gt in the trace.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Flat `key = value` settings file; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-iteration trace; CSV for a `.csv` extension, NDJSON otherwise.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub noise: NoiseFlags,
    #[command(flatten)]
    pub model: ModelFlags,
}

/// Rejects a level flag that does not belong to the chosen noise model.
pub(crate) fn check_level_flags(noise: &NoiseFlags, settings: &Settings) -> Result<(), CliError> {
    use crate::settings::NoiseModel;
    match settings.noise {
        NoiseModel::Poisson if noise.sigma.is_some() => Err(CliError::usage("--sigma applies to gaussian noise; use --zeta")),
        NoiseModel::Gaussian if noise.zeta.is_some() => Err(CliError::usage("--zeta applies to poisson noise; use --sigma")),
        _ => Ok(()),
    }
}

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let w = BufWriter::new(file);
    let csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if csv {
        trace.write_csv(w)?;
    } else {
        trace.write_ndjson(w)?;
    }
    Ok(())
}

pub fn run(args: &DenoiseArgs) -> Result<i32, CliError> {
    let settings = layered(args.config.as_ref(), Some(&args.noise), &args.model)?.resolve()?;
    check_level_flags(&args.noise, &settings)?;

    let y = load_image(&args.input)?;
    let gt = args.gt.as_ref().map(load_image).transpose()?;
    let mut net = DenoiserNetwork::new(settings.arch.clone(), y.channels(), settings.run.seed)?;

    let result = match optimize(&mut net, &y, &settings.run, gt.as_ref()) {
        Ok(r) => r,
        Err(Error::NonFinite { iter, trace }) => {
            if let Some(path) = &args.trace {
                write_trace(&trace, path)?;
            }
            return Err(Error::NonFinite { iter, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let output: Image = result.output_ema.clipped();
    save_image(&output, &args.output, BitDepth::Eight)?;
    if let Some(path) = &args.trace {
        write_trace(&result.trace, path)?;
    }

    let t = &result.trace;
    println!(
        "objective={} stop_iter={} stop_reason={}",
        t.objective,
        t.stop_iter,
        t.stop_reason.name()
    );
    if let Some(x) = &gt {
        let q = QualityReport::measure(&output, x)?;
        println!("psnr={:.4} ssim={:.4}", q.psnr_db, q.ssim);
    }
    Ok(EXIT_OK)
}
