use std::f64::consts::{FRAC_2_SQRT_PI, SQRT_2};

use crate::error::{Error, Result};

/// Elementwise nonlinearity applied to hidden units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    /// Exact erf form `t Φ(t)`.
    Gelu,
    /// `0.5 t (1 + tanh(sqrt(2/π)(t + 0.044715 t^3)))`, as used by some teachers.
    GeluTanh,
    /// `t^p` with `p >= 1`.
    Power(u32),
}

const GELU_TANH_COEFF: f64 = 0.044_715;

impl Activation {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Identity => t,
            Activation::Relu => t.max(0.0),
            Activation::Gelu => 0.5 * t * (1.0 + libm::erf(t / SQRT_2)),
            Activation::GeluTanh => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * t * (1.0 + (c * (t + GELU_TANH_COEFF * t * t * t)).tanh())
            }
            Activation::Power(p) => t.powi(p as i32),
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(t / SQRT_2));
                let pdf = 0.5 * FRAC_2_SQRT_PI / SQRT_2 * (-0.5 * t * t).exp();
                cdf + t * pdf
            }
            Activation::GeluTanh => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                let inner = c * (t + GELU_TANH_COEFF * t * t * t);
                let th = inner.tanh();
                let dinner = c * (1.0 + 3.0 * GELU_TANH_COEFF * t * t);
                0.5 * (1.0 + th) + 0.5 * t * (1.0 - th * th) * dinner
            }
            Activation::Power(0) => 0.0,
            Activation::Power(p) => p as f64 * t.powi(p as i32 - 1),
        }
    }

    /// Identifier used by the weight file formats.
    pub fn id(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Gelu => 2,
            Activation::Power(_) => 3,
            Activation::GeluTanh => 4,
        }
    }

    /// Inverse of [`Activation::id`]; `power` is only consulted for id 3.
    pub fn from_id(id: u32, power: Option<u32>) -> Result<Self> {
        match id {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Gelu),
            3 => match power {
                Some(p) if p >= 1 => Ok(Activation::Power(p)),
                _ => Err(Error::InvalidInput("power activation needs p >= 1".into())),
            },
            4 => Ok(Activation::GeluTanh),
            other => Err(Error::InvalidInput(format!(
                "unknown activation id {other}"
            ))),
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Activation::Power(0) => {
                Err(Error::InvalidInput("power activation needs p >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::Identity => write!(f, "identity"),
            Activation::Relu => write!(f, "relu"),
            Activation::Gelu => write!(f, "gelu"),
            Activation::GeluTanh => write!(f, "gelu-tanh"),
            Activation::Power(p) => write!(f, "power{p}"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "gelu-tanh" => Ok(Activation::GeluTanh),
            _ => s
                .strip_prefix("power")
                .and_then(|p| p.parse::<u32>().ok())
                .filter(|&p| p >= 1)
                .map(Activation::Power)
                .ok_or_else(|| Error::InvalidInput(format!("unknown activation '{s}'"))),
        }
    }
}
