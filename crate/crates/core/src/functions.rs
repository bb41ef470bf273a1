//! Named test functions used by the experiments.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Heaviside step with `H(0) = 1`.
pub fn heaviside(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinFunction {
    /// `sin(x) (2H(x) - 1)` on [-1, 1]
    HeavisideSine,
    /// `cos(x) (2H(x) - 1)` on [-π, π]
    CosOneJump,
    /// `(2H(x + π/3) - 1) cos(x) - H(x - π/2) sin(x)` on [-π, π]
    TwoJump,
    /// `sin(10πx)` on [-1, 1]
    Sin10Pi,
    /// `1 / (1 + e^{-60x})` on [-1, 1]
    Sigmoid60,
    /// `max(0, x)` on [-1, 1]
    Relu,
    /// 25 on [0, 140], 255 on (140, 400]
    Step25To255,
}

impl BuiltinFunction {
    pub const ALL: [BuiltinFunction; 7] = [
        Self::HeavisideSine,
        Self::CosOneJump,
        Self::TwoJump,
        Self::Sin10Pi,
        Self::Sigmoid60,
        Self::Relu,
        Self::Step25To255,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::HeavisideSine => "heaviside-sine",
            Self::CosOneJump => "cos-one-jump",
            Self::TwoJump => "two-jump",
            Self::Sin10Pi => "sin10pi",
            Self::Sigmoid60 => "sigmoid60",
            Self::Relu => "relu",
            Self::Step25To255 => "step-25-255",
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Self::CosOneJump | Self::TwoJump => (-PI, PI),
            Self::Step25To255 => (0.0, 400.0),
            _ => (-1.0, 1.0),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::HeavisideSine => x.sin() * (2.0 * heaviside(x) - 1.0),
            Self::CosOneJump => x.cos() * (2.0 * heaviside(x) - 1.0),
            Self::TwoJump => {
                (2.0 * heaviside(x + PI / 3.0) - 1.0) * x.cos() - heaviside(x - PI / 2.0) * x.sin()
            }
            Self::Sin10Pi => (10.0 * PI * x).sin(),
            Self::Sigmoid60 => 1.0 / (1.0 + (-60.0 * x).exp()),
            Self::Relu => x.max(0.0),
            Self::Step25To255 => {
                if x <= 140.0 {
                    25.0
                } else {
                    255.0
                }
            }
        }
    }
}

impl fmt::Display for BuiltinFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown function '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for f in BuiltinFunction::ALL {
            assert_eq!(f.name().parse::<BuiltinFunction>().unwrap(), f);
        }
        assert!("nope".parse::<BuiltinFunction>().is_err());
    }

    #[test]
    fn heaviside_convention() {
        assert_eq!(heaviside(0.0), 1.0);
        assert_eq!(heaviside(-1e-300), 0.0);
        assert_eq!(BuiltinFunction::HeavisideSine.eval(-0.5), 0.5f64.sin());
        assert_eq!(BuiltinFunction::Step25To255.eval(140.0), 25.0);
        assert_eq!(BuiltinFunction::Step25To255.eval(141.0), 255.0);
    }
}
