use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LearnError;

/// Convex upper bound on the 0-1 step `1(t < 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surrogate {
    /// `log(1 + exp(-t))`
    #[default]
    Logistic,
    /// `max(0, 1 - t)`
    Hinge,
}

impl Surrogate {
    /// Loss and derivative at margin `t`. The hinge derivative at its kink
    /// `t = 1` is taken to be 0.
    pub fn value_and_grad(self, t: f64) -> (f64, f64) {
        match self {
            Surrogate::Logistic => {
                if t >= 0.0 {
                    let e = (-t).exp();
                    (e.ln_1p(), -e / (1.0 + e))
                } else {
                    let e = t.exp();
                    (-t + e.ln_1p(), -1.0 / (1.0 + e))
                }
            }
            Surrogate::Hinge => {
                if t < 1.0 {
                    (1.0 - t, -1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    pub fn value(self, t: f64) -> f64 {
        self.value_and_grad(t).0
    }

    pub fn grad(self, t: f64) -> f64 {
        self.value_and_grad(t).1
    }
}

impl FromStr for Surrogate {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, LearnError> {
        match s {
            "logistic" => Ok(Surrogate::Logistic),
            "hinge" => Ok(Surrogate::Hinge),
            other => Err(LearnError::Config(format!("unknown surrogate {other:?}"))),
        }
    }
}

impl fmt::Display for Surrogate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Surrogate::Logistic => "logistic",
            Surrogate::Hinge => "hinge",
        })
    }
}
