//! The `dipstop` command-line tool.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod bench;
pub mod curves;
pub mod denoise;
pub mod settings;

use settings::{Layers, Settings, SettingsError, KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NON_FINITE: i32 = 4;
pub const EXIT_ROW_FAILED: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &dipstop_core::Error) -> i32 {
    use dipstop_core::Error as E;
    match e {
        E::Size(_) | E::Shape(_) | E::Domain(_) | E::Config(_) | E::Capability(_) | E::Argument(_) => EXIT_USAGE,
        E::Io { .. } | E::Codec(_) | E::Csv(_) | E::Json(_) | E::Format(_) => EXIT_IO,
        E::NonFinite { .. } => EXIT_NON_FINITE,
    }
}

impl From<dipstop_core::Error> for CliError {
    fn from(e: dipstop_core::Error) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

impl From<SettingsError> for CliError {
    fn from(e: SettingsError) -> Self {
        CliError::usage(e.0)
    }
}

#[derive(Debug, Parser)]
#[command(name = "dipstop", version, args_override_self = true)]
#[command(about = "Self-supervised single-image denoising with automatic stopping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Denoise one image.
    Denoise(denoise::DenoiseArgs),
    /// Run a method x image x noise level x seed grid and write a report.
    Bench(bench::BenchArgs),
    /// Export trajectories from saved traces.
    Curves(curves::CurvesArgs),
    /// Inspect configuration.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Print every key with its default and meaning.
    Keys,
    /// Print the effective configuration after the file and flags are applied.
    Show {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        model: ModelFlags,
    },
}

/// Observation model and objective.
#[derive(Debug, Clone, Default, Args)]
pub struct NoiseFlags {
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub zeta: Option<String>,
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

impl NoiseFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("noise", self.noise.as_ref()),
            ("sigma", self.sigma.as_ref()),
            ("zeta", self.zeta.as_ref()),
            ("objective", self.objective.as_ref()),
            ("seed", self.seed.as_ref()),
        ]
    }
}

/// Optimizer and architecture settings.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub max_iters: Option<String>,
    #[arg(long)]
    pub ema_beta: Option<String>,
    #[arg(long)]
    pub stop_window: Option<String>,
    #[arg(long = "b")]
    pub b: Option<String>,
    #[arg(long)]
    pub eps: Option<String>,
    #[arg(long)]
    pub baseline_input: Option<String>,
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub skip_channels: Option<String>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub upsample: Option<String>,
    #[arg(long)]
    pub norm: Option<String>,
    #[arg(long)]
    pub padding: Option<String>,
}

impl ModelFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("lr", self.lr.as_ref()),
            ("max_iters", self.max_iters.as_ref()),
            ("ema_beta", self.ema_beta.as_ref()),
            ("stop_window", self.stop_window.as_ref()),
            ("b", self.b.as_ref()),
            ("eps", self.eps.as_ref()),
            ("baseline_input", self.baseline_input.as_ref()),
            ("depth", self.depth.as_ref()),
            ("channels", self.channels.as_ref()),
            ("skip_channels", self.skip_channels.as_ref()),
            ("activation", self.activation.as_ref()),
            ("upsample", self.upsample.as_ref()),
            ("norm", self.norm.as_ref()),
            ("padding", self.padding.as_ref()),
        ]
    }
}

/// Defaults, then the config file, then explicit flags.
pub(crate) fn layered(
    config: Option<&PathBuf>,
    noise: Option<&NoiseFlags>,
    model: &ModelFlags,
) -> Result<Layers, CliError> {
    let mut layers = Layers::defaults();
    if let Some(path) = config {
        layers.apply_file(path).map_err(|e| match e {
            settings::ConfigFileError::Io(m) => CliError::io(m),
            settings::ConfigFileError::Invalid(e) => CliError::usage(format!("{}: {e}", path.display())),
        })?;
    }
    let mut pairs = model.pairs();
    if let Some(n) = noise {
        pairs.extend(n.pairs());
    }
    for (key, value) in pairs {
        if let Some(v) = value {
            layers.set(key, v, true)?;
        }
    }
    Ok(layers)
}

fn config_show(config: Option<&PathBuf>, noise: &NoiseFlags, model: &ModelFlags) -> Result<i32, CliError> {
    let s: Settings = layered(config, Some(noise), model)?.resolve()?;
    print!("{}", s.echo_text());
    Ok(EXIT_OK)
}

fn config_keys() -> i32 {
    for (key, default, help) in KEYS {
        println!("{key:<15} {default:<15} {help}");
    }
    EXIT_OK
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Denoise(a) => denoise::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Curves(a) => curves::run(&a),
        Command::Config(ConfigCommand::Keys) => Ok(config_keys()),
        Command::Config(ConfigCommand::Show { config, noise, model }) => config_show(config.as_ref(), &noise, &model),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
