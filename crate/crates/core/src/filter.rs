//! Tail suppression of singular spectra.
//!
//! For a spectrum `σ₁ ≥ … ≥ σ_r` and rank cut `k`, the head `σ₁..σ_k` is kept
//! and every tail value is multiplied by `exp(-α·σᵢ)`, so larger tail values
//! are damped harder. The output is not re-sorted: each value stays paired
//! with its singular vectors.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svd::{reconstruct_with, svd, SvdFactors};
use crate::tensor::Matrix;

/// Singular values below this fraction of `σ₁` are treated as exact zeros.
pub const ZERO_SIGMA_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub top_k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.01
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            top_k: 1,
            alpha: default_alpha(),
        }
    }
}

impl FilterConfig {
    pub fn new(top_k: usize, alpha: f64) -> Self {
        FilterConfig { top_k, alpha }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        FilterConfig { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Domain(format!(
                "suppression factor must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `top_k` clamped to a spectrum of length `len`.
    pub fn effective_k(&self, len: usize) -> usize {
        if self.top_k > len {
            warn!("top-k {} exceeds spectrum length {len}; clamping", self.top_k);
        }
        self.top_k.min(len)
    }
}

/// Applies the tail rule `σ'ᵢ = σᵢ` for `i ≤ k`, `σ'ᵢ = exp(-α·σᵢ)·σᵢ` otherwise.
pub fn suppress_sigma(sigma: &[f64], cfg: &FilterConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_spectrum(sigma)?;
    let k = cfg.effective_k(sigma.len());
    Ok(apply_rule(sigma, k, cfg.alpha))
}

fn apply_rule(sigma: &[f64], k: usize, alpha: f64) -> Vec<f64> {
    sigma
        .iter()
        .enumerate()
        .map(|(i, &s)| if i < k { s } else { (-alpha * s).exp() * s })
        .collect()
}

fn check_spectrum(sigma: &[f64]) -> Result<()> {
    if let Some(i) = sigma.iter().position(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::Domain(format!(
            "singular value {i} is {}, expected finite and non-negative",
            sigma[i]
        )));
    }
    if let Some(i) = sigma.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::Domain(format!(
            "singular values must be non-increasing: σ[{i}] = {} < σ[{}] = {}",
            sigma[i],
            i + 1,
            sigma[i + 1]
        )));
    }
    Ok(())
}

/// Filtered, main and tail reconstructions of one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplit {
    pub filtered: Matrix,
    pub main: Matrix,
    pub tail: Matrix,
    /// Spectrum of the input, with values under the zero threshold set to 0.
    pub sigma_before: Vec<f64>,
    /// Spectrum of `filtered`, positionally paired with `sigma_before`.
    pub sigma_after: Vec<f64>,
}

/// SVD once, filter many times. The sampler re-filters the same embedding
/// at every step with a different suppression strength.
#[derive(Debug, Clone)]
pub struct Decomposition {
    factors: SvdFactors,
    cleaned: Vec<f64>,
}

impl Decomposition {
    pub fn new(x: &Matrix) -> Result<Self> {
        Ok(Self::from_factors(svd(x)?))
    }

    pub fn from_factors(factors: SvdFactors) -> Self {
        let lead = factors.sigma.first().copied().unwrap_or(0.0);
        let cleaned = factors
            .sigma
            .iter()
            .map(|&s| if s < ZERO_SIGMA_RATIO * lead { 0.0 } else { s })
            .collect();
        Decomposition { factors, cleaned }
    }

    pub fn factors(&self) -> &SvdFactors {
        &self.factors
    }

    pub fn sigma(&self) -> &[f64] {
        &self.factors.sigma
    }

    /// Spectrum after the zero threshold.
    pub fn cleaned_sigma(&self) -> &[f64] {
        &self.cleaned
    }

    /// Number of singular values above the zero threshold.
    pub fn numerical_rank(&self) -> usize {
        self.cleaned.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn filtered_sigma(&self, cfg: &FilterConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        let k = cfg.effective_k(self.cleaned.len());
        Ok(apply_rule(&self.cleaned, k, cfg.alpha))
    }

    pub fn filtered(&self, cfg: &FilterConfig) -> Result<Matrix> {
        self.rebuild(&self.filtered_sigma(cfg)?)
    }

    /// Top-`k` reconstruction.
    pub fn main(&self, top_k: usize) -> Result<Matrix> {
        let k = top_k.min(self.cleaned.len());
        let head: Vec<f64> = self
            .cleaned
            .iter()
            .enumerate()
            .map(|(i, &s)| if i < k { s } else { 0.0 })
            .collect();
        self.rebuild(&head)
    }

    /// Reconstruction from the singular directions beyond `k`, unattenuated.
    pub fn tail(&self, top_k: usize) -> Result<Matrix> {
        let k = top_k.min(self.cleaned.len());
        let tail: Vec<f64> = self
            .cleaned
            .iter()
            .enumerate()
            .map(|(i, &s)| if i < k { 0.0 } else { s })
            .collect();
        self.rebuild(&tail)
    }

    /// Tail directions with the suppression rule applied.
    pub fn attenuated_tail(&self, cfg: &FilterConfig) -> Result<Matrix> {
        let k = cfg.effective_k(self.cleaned.len());
        let mut sigma = self.filtered_sigma(cfg)?;
        sigma[..k].iter_mut().for_each(|s| *s = 0.0);
        self.rebuild(&sigma)
    }

    pub fn split(&self, cfg: &FilterConfig) -> Result<SpectralSplit> {
        let sigma_after = self.filtered_sigma(cfg)?;
        Ok(SpectralSplit {
            filtered: self.rebuild(&sigma_after)?,
            main: self.main(cfg.top_k)?,
            tail: self.tail(cfg.top_k)?,
            sigma_before: self.cleaned.clone(),
            sigma_after,
        })
    }

    fn rebuild(&self, sigma: &[f64]) -> Result<Matrix> {
        reconstruct_with(&self.factors.u, sigma, &self.factors.v)
    }
}

pub fn split(x: &Matrix, cfg: &FilterConfig) -> Result<SpectralSplit> {
    cfg.validate()?;
    Decomposition::new(x)?.split(cfg)
}

/// Ablation: filter the encoder feature `f` and then project it,
/// `projection · filtered(f)`.
pub fn filter_then_project(feature: &Matrix, projection: &Matrix, cfg: &FilterConfig) -> Result<Matrix> {
    let filtered = split(feature, cfg)?.filtered;
    projection.matmul(&filtered)
}
