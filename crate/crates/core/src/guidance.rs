//! Classifier-free guidance with a style-specific negative branch.
//!
//! The conditional branch receives the tail-suppressed style Key/Value; the
//! unconditional branch receives the isolated tail, so guidance extrapolates
//! away from the content carried by the tail instead of away from a null
//! embedding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{Decomposition, FilterConfig};
use crate::schedule::ScheduleConfig;
use crate::tensor::Matrix;

/// `ε = ε_uncond + ω (ε_cond - ε_uncond)`.
///
/// Evaluated as `ω·ε_cond + (1 - ω)·ε_uncond`, which is the same affine map
/// and returns either input exactly at `ω = 1` or `ω = 0`.
pub fn cfg_combine(eps_cond: &Matrix, eps_uncond: &Matrix, omega: f64) -> Result<Matrix> {
    if eps_cond.shape() != eps_uncond.shape() {
        return Err(Error::Shape {
            op: "cfg_combine",
            lhs: eps_cond.shape(),
            rhs: eps_uncond.shape(),
        });
    }
    if !omega.is_finite() {
        return Err(Error::Domain(format!("guidance scale must be finite, got {omega}")));
    }
    let rest = 1.0 - omega;
    let data = eps_cond
        .data()
        .iter()
        .zip(eps_uncond.data())
        .map(|(&c, &u)| omega * c + rest * u)
        .collect();
    Matrix::from_vec_checked(eps_cond.rows(), eps_cond.cols(), data)
}

/// What the unconditional branch carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeBranch {
    /// The tail reconstruction with its original singular values.
    #[default]
    IsolatedTail,
    /// The tail with the step's suppression already applied.
    AttenuatedTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceBranches {
    /// Per layer `(K, V)` for the conditional pass.
    pub cond_kv: Vec<(Matrix, Matrix)>,
    /// Per layer `(K, V)` for the unconditional pass.
    pub uncond_kv: Vec<(Matrix, Matrix)>,
    pub omega: f64,
}

impl GuidanceBranches {
    pub fn new(cond_kv: Vec<(Matrix, Matrix)>, uncond_kv: Vec<(Matrix, Matrix)>, omega: f64) -> Result<Self> {
        if cond_kv.len() != uncond_kv.len() {
            return Err(Error::Dimensions(format!(
                "{} conditional layers vs {} unconditional layers",
                cond_kv.len(),
                uncond_kv.len()
            )));
        }
        for ((ck, cv), (uk, uv)) in cond_kv.iter().zip(&uncond_kv) {
            for (c, u) in [(ck, uk), (cv, uv)] {
                if c.shape() != u.shape() {
                    return Err(Error::Shape {
                        op: "guidance branches",
                        lhs: c.shape(),
                        rhs: u.shape(),
                    });
                }
            }
        }
        Ok(GuidanceBranches {
            cond_kv,
            uncond_kv,
            omega,
        })
    }

    pub fn layers(&self) -> usize {
        self.cond_kv.len()
    }
}

/// Cached key and value decompositions of one attention layer.
#[derive(Debug, Clone)]
pub struct LayerDecomposition {
    pub key: Decomposition,
    pub value: Decomposition,
}

impl LayerDecomposition {
    pub fn new(key: &Matrix, value: &Matrix) -> Result<Self> {
        Ok(LayerDecomposition {
            key: Decomposition::new(key)?,
            value: Decomposition::new(value)?,
        })
    }

    /// Conditional `(K, V)` at suppression strength `alpha`.
    pub fn conditional(&self, top_k: usize, alpha: f64) -> Result<(Matrix, Matrix)> {
        let cfg = FilterConfig::new(top_k, alpha);
        Ok((self.key.filtered(&cfg)?, self.value.filtered(&cfg)?))
    }

    /// Unconditional `(K, V)`. Falls back to exact zeros when nothing lies
    /// beyond `top_k`.
    pub fn negative(&self, top_k: usize, alpha: f64, kind: NegativeBranch) -> Result<(Matrix, Matrix)> {
        match kind {
            NegativeBranch::IsolatedTail => Ok((self.key.tail(top_k)?, self.value.tail(top_k)?)),
            NegativeBranch::AttenuatedTail => {
                let cfg = FilterConfig::new(top_k, alpha);
                Ok((self.key.attenuated_tail(&cfg)?, self.value.attenuated_tail(&cfg)?))
            }
        }
    }
}

/// Decomposes every layer once, in parallel.
pub fn decompose_layers(kv_layers: &[(Matrix, Matrix)]) -> Result<Vec<LayerDecomposition>> {
    kv_layers
        .par_iter()
        .map(|(k, v)| LayerDecomposition::new(k, v))
        .collect()
}

/// Builds both guidance branches for step `t` from already decomposed layers.
pub fn branches_from_decompositions(
    layers: &[LayerDecomposition],
    top_k: usize,
    schedule: &ScheduleConfig,
    t: usize,
    omega: f64,
    negative: NegativeBranch,
) -> Result<GuidanceBranches> {
    let alpha = schedule.alpha_at(t as f64)?;
    let pairs: Vec<((Matrix, Matrix), (Matrix, Matrix))> = layers
        .par_iter()
        .map(|layer| {
            Ok((
                layer.conditional(top_k, alpha)?,
                layer.negative(top_k, alpha, negative)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (cond, uncond) = pairs.into_iter().unzip();
    GuidanceBranches::new(cond, uncond, omega)
}

/// Conditional branch: every layer's K and V filtered with `α_t` from the
/// schedule. Unconditional branch: the isolated tail beyond `top_k`.
pub fn build_branches(
    kv_layers: &[(Matrix, Matrix)],
    top_k: usize,
    schedule: &ScheduleConfig,
    t: usize,
    omega: f64,
) -> Result<GuidanceBranches> {
    build_branches_with(kv_layers, top_k, schedule, t, omega, NegativeBranch::IsolatedTail)
}

pub fn build_branches_with(
    kv_layers: &[(Matrix, Matrix)],
    top_k: usize,
    schedule: &ScheduleConfig,
    t: usize,
    omega: f64,
    negative: NegativeBranch,
) -> Result<GuidanceBranches> {
    schedule.validate()?;
    let layers = decompose_layers(kv_layers)?;
    branches_from_decompositions(&layers, top_k, schedule, t, omega, negative)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn omega_one_and_zero() {
        let c = m(&[&[1.0, -2.0], &[0.25, 3.0]]);
        let u = m(&[&[7.0, 0.5], &[-1.0, 1e6]]);
        assert_eq!(cfg_combine(&c, &u, 1.0).unwrap(), c);
        assert_eq!(cfg_combine(&c, &u, 0.0).unwrap(), u);
    }

    #[test]
    fn scalar_extrapolation() {
        let out = cfg_combine(&m(&[&[1.0]]), &m(&[&[0.0]]), 5.0).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            cfg_combine(&Matrix::zeros(1, 2), &Matrix::zeros(2, 1), 5.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn degenerate_branches() {
        let k = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 7.0]]);
        let v = m(&[&[0.5, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let sched = ScheduleConfig {
            alpha0: 0.0,
            ..ScheduleConfig::default()
        };
        let b = build_branches(&[(k.clone(), v.clone())], 2, &sched, 0, 5.0).unwrap();
        assert!(b.cond_kv[0].0.relative_distance(&k).unwrap() < 1e-12);
        assert!(b.cond_kv[0].1.relative_distance(&v).unwrap() < 1e-12);
        assert_eq!(b.uncond_kv[0].0, Matrix::zeros(3, 2));
        assert_eq!(b.uncond_kv[0].1, Matrix::zeros(3, 2));
    }

    #[test]
    fn mismatched_branch_layers() {
        let a = (Matrix::zeros(2, 2), Matrix::zeros(2, 2));
        let b = (Matrix::zeros(2, 3), Matrix::zeros(2, 2));
        assert!(GuidanceBranches::new(vec![a.clone()], vec![], 1.0).is_err());
        assert!(GuidanceBranches::new(vec![a], vec![b], 1.0).is_err());
    }
}
