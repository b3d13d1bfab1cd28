//! Run settings: built-in defaults, then a flat `key = value` config file,
//! then explicit flags. Keys are snake_case; each has a kebab-case flag.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use dipstop_core::network::{Activation, ArchSpec, Norm, Padding, Upsample};
use dipstop_core::optimizer::{BaselineInput, Objective, RunConfig};

/// `(key, default, description)` in echo order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("noise", "gaussian", "noise model: gaussian | poisson"),
    ("sigma", "25/255", "Gaussian noise level, [0,1] scale or N/255"),
    ("zeta", "0.1", "Poisson scale"),
    ("objective", "auto", "dip | dip_sure | ste | pure | auto (ste for gaussian, pure for poisson)"),
    ("seed", "0", "seed for network init, per-iteration draws and synthetic noise"),
    ("lr", "0.1", "RAdam learning rate"),
    ("max_iters", "5000", "iteration cap"),
    ("ema_beta", "0.99", "output averaging weight, in [0,1)"),
    ("stop_window", "1", "trailing window of the zero-crossing rule"),
    ("b", "sigma", "upper bound of the input perturbation level; `sigma` follows sigma"),
    ("eps", "0.001", "PURE finite-difference step"),
    ("baseline_input", "fixed_noise", "dip network input: fixed_noise | noisy_image"),
    ("depth", "4", "encoder levels"),
    ("channels", "32,64,64,128", "feature widths per level (one value applies to all)"),
    ("skip_channels", "4", "skip widths per level (one value applies to all)"),
    ("activation", "leaky_relu:0.1", "leaky_relu[:slope] | relu"),
    ("upsample", "bilinear", "bilinear | nearest"),
    ("norm", "batch", "batch | none"),
    ("padding", "reflect", "conv padding: reflect | zero"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SettingsError(pub String);

impl fmt::Display for SettingsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SettingsError {}

type Res<T> = Result<T, SettingsError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(SettingsError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    Gaussian,
    Poisson,
}

/// Parses `0.098`, `25/255` and the like; the result must lie in `[0, 1]`.
pub fn parse_level(s: &str) -> Res<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let (n, d): (f64, f64) = match (num.trim().parse(), den.trim().parse()) {
                (Ok(n), Ok(d)) => (n, d),
                _ => return err(format!("bad noise level `{s}`")),
            };
            if d <= 0.0 {
                return err(format!("bad noise level `{s}`"));
            }
            n / d
        }
        None => s.parse().map_err(|_| SettingsError(format!("bad noise level `{s}`")))?,
    };
    if !(0.0..=1.0).contains(&v) {
        return err(format!("noise level `{s}` is outside [0, 1]; use e.g. 25/255"));
    }
    Ok(v)
}

pub fn parse_list<T>(s: &str, f: impl Fn(&str) -> Res<T>) -> Res<Vec<T>> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return err(format!("empty list `{s}`"));
    }
    items.into_iter().map(f).collect()
}

/// Parses a number, naming `key` on failure.
pub fn num<T: std::str::FromStr>(key: &str, s: &str) -> Res<T> {
    s.trim()
        .parse()
        .map_err(|_| SettingsError(format!("{key}: cannot parse `{s}`")))
}

fn typed<T: std::str::FromStr<Err = dipstop_core::Error>>(key: &str, s: &str) -> Res<T> {
    s.trim().parse().map_err(|e: dipstop_core::Error| SettingsError(format!("{key}: {e}")))
}

/// Raw key/value layers, later layers winning.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    values: BTreeMap<String, String>,
    /// Keys set by explicit flags.
    explicit: Vec<String>,
}

impl Layers {
    pub fn defaults() -> Self {
        Layers {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
            explicit: Vec::new(),
        }
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Io(format!("{}: {e}", path.display())))?;
        self.apply_text(&text).map_err(ConfigFileError::Invalid)
    }

    pub fn apply_text(&mut self, text: &str) -> Res<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("config line {}: expected `key = value`", n + 1));
            };
            self.set(k.trim(), v.trim(), false)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, explicit: bool) -> Res<()> {
        if !KEYS.iter().any(|(k, _, _)| *k == key) {
            return err(format!("unknown config key `{key}`"));
        }
        self.values.insert(key.to_string(), value.to_string());
        if explicit && !self.explicit.iter().any(|k| k == key) {
            self.explicit.push(key.to_string());
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.iter().any(|k| k == key)
    }

    fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    pub fn resolve(&self) -> Res<Settings> {
        let g = |k: &str| -> &str { self.get(k) };
        let noise = match g("noise") {
            "gaussian" => NoiseModel::Gaussian,
            "poisson" => NoiseModel::Poisson,
            other => return err(format!("noise: unknown model `{other}`")),
        };
        // Poisson runs have no Gaussian level; zero keeps Gaussian-only diagnostics off.
        let sigma = match noise {
            NoiseModel::Gaussian => parse_level(g("sigma")).map_err(|e| SettingsError(format!("sigma: {e}")))?,
            NoiseModel::Poisson => 0.0,
        };
        let zeta: f64 = num("zeta", g("zeta"))?;
        let b = match g("b") {
            "sigma" => None,
            v => Some(parse_level(v).map_err(|e| SettingsError(format!("b: {e}")))?),
        };
        let depth: usize = num("depth", g("depth"))?;
        let widths = |key: &str| -> Res<Vec<usize>> {
            let v = parse_list(g(key), |s| num(key, s))?;
            Ok(if v.len() == 1 { vec![v[0]; depth] } else { v })
        };
        let arch = ArchSpec {
            depth,
            channels: widths("channels")?,
            skip_channels: widths("skip_channels")?,
            activation: typed::<Activation>("activation", g("activation"))?,
            upsample: typed::<Upsample>("upsample", g("upsample"))?,
            norm: typed::<Norm>("norm", g("norm"))?,
            padding: typed::<Padding>("padding", g("padding"))?,
        };
        arch.validate().map_err(|e| SettingsError(e.to_string()))?;
        let run = RunConfig {
            objective: match (g("objective"), noise) {
                ("auto", NoiseModel::Gaussian) => Objective::Ste,
                ("auto", NoiseModel::Poisson) => Objective::Pure,
                (v, _) => typed::<Objective>("objective", v)?,
            },
            sigma,
            b,
            zeta,
            eps: num("eps", g("eps"))?,
            lr: num("lr", g("lr"))?,
            max_iters: num("max_iters", g("max_iters"))?,
            ema_beta: num("ema_beta", g("ema_beta"))?,
            stop_window: num("stop_window", g("stop_window"))?,
            seed: num("seed", g("seed"))?,
            baseline_input: typed::<BaselineInput>("baseline_input", g("baseline_input"))?,
        };
        let settings = Settings { noise, run, arch };
        settings.check_objective()?;
        settings.run.validate().map_err(|e| SettingsError(e.to_string()))?;
        Ok(settings)
    }
}

#[derive(Debug)]
pub enum ConfigFileError {
    Io(String),
    Invalid(SettingsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub noise: NoiseModel,
    pub run: RunConfig,
    pub arch: ArchSpec,
}

impl Settings {
    fn check_objective(&self) -> Res<()> {
        match (self.noise, self.run.objective) {
            (NoiseModel::Poisson, Objective::DipSure | Objective::Ste) => {
                err(format!("objective {} needs gaussian noise", self.run.objective))
            }
            (NoiseModel::Gaussian, Objective::Pure) => err("objective pure needs poisson noise"),
            _ => Ok(()),
        }
    }

    /// Canonical `(key, value)` pairs of the effective configuration.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let r = &self.run;
        vec![
            ("noise", match self.noise {
                NoiseModel::Gaussian => "gaussian".into(),
                NoiseModel::Poisson => "poisson".into(),
            }),
            ("sigma", r.sigma.to_string()),
            ("zeta", r.zeta.to_string()),
            ("objective", r.objective.to_string()),
            ("seed", r.seed.to_string()),
            ("lr", r.lr.to_string()),
            ("max_iters", r.max_iters.to_string()),
            ("ema_beta", r.ema_beta.to_string()),
            ("stop_window", r.stop_window.to_string()),
            ("b", r.b.map_or("sigma".into(), |b| b.to_string())),
            ("eps", r.eps.to_string()),
            ("baseline_input", r.baseline_input.to_string()),
            ("depth", self.arch.depth.to_string()),
            ("channels", join(&self.arch.channels)),
            ("skip_channels", join(&self.arch.skip_channels)),
            ("activation", self.arch.activation.to_string()),
            ("upsample", self.arch.upsample.to_string()),
            ("norm", self.arch.norm.to_string()),
            ("padding", self.arch.padding.to_string()),
        ]
    }

    pub fn echo_text(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn echo_map(&self) -> BTreeMap<String, String> {
        self.echo().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
