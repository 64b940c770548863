//! Suppression strength over denoising steps.
//!
//! `t` counts completed denoising iterations: `t = 0` is the first step of
//! sampling and `t = T` the end. Suppression is strongest early, while the
//! global layout forms, and relaxes later.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleVariant {
    /// `α₀ · (1 - s(t))` with the logistic `s(t)`.
    #[default]
    Sigmoid,
    /// `α₀` at every step.
    Fixed,
    /// `α₀ · (1 - t/T)`.
    Linear,
    /// `α₀ · exp(-λ t/T)`.
    Exponential,
}

impl ScheduleVariant {
    pub const ALL: [ScheduleVariant; 4] = [
        ScheduleVariant::Sigmoid,
        ScheduleVariant::Fixed,
        ScheduleVariant::Linear,
        ScheduleVariant::Exponential,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleVariant::Sigmoid => "sigmoid",
            ScheduleVariant::Fixed => "fixed",
            ScheduleVariant::Linear => "linear",
            ScheduleVariant::Exponential => "exponential",
        }
    }
}

impl fmt::Display for ScheduleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown schedule variant {s:?} (expected sigmoid, fixed, linear or exponential)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub gamma: f64,
    pub c: f64,
    pub total_steps: usize,
    #[serde(default)]
    pub variant: ScheduleVariant,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

pub const DEFAULT_LAMBDA: f64 = 3.0;

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            alpha0: 0.01,
            gamma: 40.0,
            c: 0.25,
            total_steps: 30,
            variant: ScheduleVariant::Sigmoid,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha0.is_finite() || self.alpha0 < 0.0 {
            return Err(Error::Config(format!("alpha0 must be finite and >= 0, got {}", self.alpha0)));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        match self.variant {
            ScheduleVariant::Sigmoid => {
                if !self.gamma.is_finite() {
                    return Err(Error::Config(format!("gamma must be finite, got {}", self.gamma)));
                }
                if !(0.0..=1.0).contains(&self.c) {
                    return Err(Error::Config(format!("midpoint c must lie in [0, 1], got {}", self.c)));
                }
            }
            ScheduleVariant::Exponential => {
                if !self.lambda.is_finite() || self.lambda <= 0.0 {
                    return Err(Error::Config(format!("lambda must be finite and > 0, got {}", self.lambda)));
                }
            }
            ScheduleVariant::Fixed | ScheduleVariant::Linear => {}
        }
        Ok(())
    }

    fn progress(&self, t: f64) -> Result<f64> {
        let total = self.total_steps as f64;
        if !(0.0..=total).contains(&t) {
            return Err(Error::Domain(format!("step {t} outside [0, {}]", self.total_steps)));
        }
        Ok(t / total)
    }

    /// Logistic progress `s(t) = 1 / (1 + exp(-γ (t/T - c)))`.
    ///
    /// `t` is normally an integer step; fractional values are accepted so the
    /// midpoint `t = cT` can be evaluated when it falls between steps.
    pub fn s_of_t(&self, t: f64) -> Result<f64> {
        self.validate()?;
        let x = self.progress(t)?;
        Ok(1.0 / (1.0 + (-self.gamma * (x - self.c)).exp()))
    }

    /// Suppression strength at step `t`.
    pub fn alpha_at(&self, t: f64) -> Result<f64> {
        self.validate()?;
        let x = self.progress(t)?;
        Ok(match self.variant {
            // 1 - s(t) written as the complementary logistic, so late steps
            // keep full relative precision.
            ScheduleVariant::Sigmoid => self.alpha0 / (1.0 + (self.gamma * (x - self.c)).exp()),
            ScheduleVariant::Fixed => self.alpha0,
            ScheduleVariant::Linear => self.alpha0 * (1.0 - x),
            ScheduleVariant::Exponential => self.alpha0 * (-self.lambda * x).exp(),
        })
    }

    /// `(t, s(t), α_t)` for `t = 0..=T`.
    pub fn table(&self) -> Result<Vec<(usize, f64, f64)>> {
        (0..=self.total_steps)
            .map(|t| {
                let tf = t as f64;
                Ok((t, self.s_of_t(tf)?, self.alpha_at(tf)?))
            })
            .collect()
    }
}
