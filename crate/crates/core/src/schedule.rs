//! Exponential learning-rate decay `eta_i = eta0 * alpha^(i / s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(eta0, alpha, s)` plus an optional staircase mode that floors `i / s`.
///
/// The default keeps the rate fixed at `eta0 = 0.001` (`alpha = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub eta0: f64,
    pub alpha: f64,
    pub s: f64,
    pub staircase: bool,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            eta0: 0.001,
            alpha: 1.0,
            s: 1.0,
            staircase: false,
        }
    }
}

impl LrSchedule {
    pub fn constant(eta0: f64) -> Self {
        LrSchedule {
            eta0,
            ..Default::default()
        }
    }

    pub fn exponential(eta0: f64, alpha: f64, s: f64) -> Self {
        LrSchedule {
            eta0,
            alpha,
            s,
            staircase: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta0", self.eta0), ("alpha", self.alpha), ("s", self.s)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "lr.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Learning rate at 0-based step `i`.
    pub fn rate(&self, i: u64) -> f64 {
        if i == 0 || self.alpha == 1.0 {
            return self.eta0;
        }
        let mut exponent = i as f64 / self.s;
        if self.staircase {
            exponent = exponent.floor();
        }
        self.eta0 * self.alpha.powf(exponent)
    }
}
