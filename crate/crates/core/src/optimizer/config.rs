use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::DEFAULT_PURE_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Plain least squares to the noisy image; never self-stops.
    Dip,
    /// SURE with the noisy image as network input.
    DipSure,
    /// SURE with a freshly perturbed input every iteration.
    Ste,
    /// Poisson unbiased risk estimate.
    Pure,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::Dip, Objective::DipSure, Objective::Ste, Objective::Pure];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Dip => "dip",
            Objective::DipSure => "dip_sure",
            Objective::Ste => "ste",
            Objective::Pure => "pure",
        }
    }

    pub fn self_stops(self) -> bool {
        self != Objective::Dip
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, Objective::DipSure | Objective::Ste)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown objective {s:?}")))
    }
}

/// Network input for the `dip` objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineInput {
    NoisyImage,
    /// A fixed `U(0, 0.1)` code drawn once from the run seed.
    FixedNoise,
}

impl BaselineInput {
    pub fn name(self) -> &'static str {
        match self {
            BaselineInput::NoisyImage => "noisy_image",
            BaselineInput::FixedNoise => "fixed_noise",
        }
    }
}

impl fmt::Display for BaselineInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy_image" => Ok(BaselineInput::NoisyImage),
            "fixed_noise" => Ok(BaselineInput::FixedNoise),
            _ => Err(Error::Argument(format!("unknown baseline input {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub objective: Objective,
    pub sigma: f64,
    /// Upper bound of the perturbation level; `None` means `sigma`.
    pub b: Option<f64>,
    pub zeta: f64,
    pub eps: f64,
    pub lr: f64,
    pub max_iters: usize,
    pub ema_beta: f64,
    pub stop_window: usize,
    pub seed: u64,
    pub baseline_input: BaselineInput,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            objective: Objective::Ste,
            sigma: 25.0 / 255.0,
            b: None,
            zeta: 0.1,
            eps: DEFAULT_PURE_EPS,
            lr: 0.1,
            max_iters: 5000,
            ema_beta: 0.99,
            stop_window: 1,
            seed: 0,
            baseline_input: BaselineInput::FixedNoise,
        }
    }
}

impl RunConfig {
    pub fn new(objective: Objective, sigma: f64) -> Self {
        RunConfig {
            objective,
            sigma,
            ..RunConfig::default()
        }
    }

    pub fn effective_b(&self) -> f64 {
        self.b.unwrap_or(self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.ema_beta) {
            return bad(format!("ema_beta must lie in [0, 1), got {}", self.ema_beta));
        }
        if self.stop_window == 0 {
            return bad("stop_window must be >= 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        let b = self.effective_b();
        if self.objective == Objective::Ste && !(b >= 0.0 && b.is_finite()) {
            return bad(format!("b must be >= 0, got {b}"));
        }
        if self.objective == Objective::Pure {
            if !(self.zeta > 0.0 && self.zeta.is_finite()) {
                return bad(format!("zeta must be > 0, got {}", self.zeta));
            }
            if !(self.eps > 0.0 && self.eps.is_finite()) {
                return bad(format!("eps must be > 0, got {}", self.eps));
            }
        }
        Ok(())
    }
}
