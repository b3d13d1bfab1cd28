use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
}

impl Activation {
    pub(crate) fn slope(self) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => slope,
            Activation::Relu => 0.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu:{slope}"),
            Activation::Relu => f.write_str("relu"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// `relu`, `leaky_relu` (slope 0.1) or `leaky_relu:<slope>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "relu" => Ok(Activation::Relu),
            None if s == "leaky_relu" => Ok(Activation::LeakyRelu { slope: 0.1 }),
            Some(("leaky_relu", slope)) => slope
                .parse()
                .map(|slope| Activation::LeakyRelu { slope })
                .map_err(|_| Error::Config(format!("bad leaky_relu slope `{slope}`"))),
            _ => Err(Error::Config(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsample {
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    Batch,
    None,
}

/// How convolutions extend their input past the border.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Zero,
    #[default]
    Reflect,
}

macro_rules! simple_enum_text {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), s
                    ))),
                }
            }
        }
    };
}

simple_enum_text!(Upsample, Upsample::Bilinear => "bilinear", Upsample::Nearest => "nearest");
simple_enum_text!(Norm, Norm::Batch => "batch", Norm::None => "none");
simple_enum_text!(Padding, Padding::Zero => "zero", Padding::Reflect => "reflect");

/// Encoder-decoder layout: `depth` stride-2 levels, each with its own
/// feature width and skip-connection width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub depth: usize,
    pub channels: Vec<usize>,
    pub skip_channels: Vec<usize>,
    pub activation: Activation,
    pub upsample: Upsample,
    pub norm: Norm,
    #[serde(default)]
    pub padding: Padding,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            depth: 4,
            channels: vec![32, 64, 64, 128],
            skip_channels: vec![4; 4],
            activation: Activation::LeakyRelu { slope: 0.1 },
            upsample: Upsample::Bilinear,
            norm: Norm::Batch,
            padding: Padding::Reflect,
        }
    }
}

impl ArchSpec {
    /// Same shape with `width` channels everywhere.
    pub fn uniform(depth: usize, width: usize, skip: usize) -> Self {
        ArchSpec {
            depth,
            channels: vec![width; depth],
            skip_channels: vec![skip; depth],
            ..ArchSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.channels.len() != self.depth || self.skip_channels.len() != self.depth {
            return Err(Error::Config(format!(
                "depth {} needs {0} channel and skip entries, got {} and {}",
                self.depth,
                self.channels.len(),
                self.skip_channels.len()
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return Err(Error::Config("activation slope must be finite".into()));
            }
        }
        Ok(())
    }

    /// Spatial sizes are padded up to a multiple of this.
    pub fn stride_multiple(&self) -> usize {
        1 << self.depth
    }
}
