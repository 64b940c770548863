//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! For `x` of shape `(m, n)` with `m >= n` the columns of `x` are rotated in
//! pairs until mutually orthogonal; the accumulated rotations form `V`, the
//! column norms are the singular values and the normalized columns form `U`.
//! Wide inputs are handled through the transpose.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAX_SWEEPS: usize = 100;

/// `x ≈ u · diag(sigma) · vᵀ` with `sigma` sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `(m, r)`, orthonormal columns.
    pub u: Matrix,
    pub sigma: Vec<f64>,
    /// `(n, r)`, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Input shape `(m, n)`.
    pub fn input_shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }
}

pub fn svd(x: &Matrix) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Err(Error::Dimensions(format!("svd needs a non-empty matrix, got {m} x {n}")));
    }
    if m >= n {
        jacobi_tall(x)
    } else {
        let t = jacobi_tall(&x.transpose())?;
        Ok(SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

/// `u · diag(sigma) · vᵀ`. Terms with a zero singular value are skipped, so an
/// all-zero spectrum yields an exact `+0.0` matrix.
pub fn reconstruct(f: &SvdFactors) -> Result<Matrix> {
    reconstruct_with(&f.u, &f.sigma, &f.v)
}

pub(crate) fn reconstruct_with(u: &Matrix, sigma: &[f64], v: &Matrix) -> Result<Matrix> {
    let r = sigma.len();
    if u.cols() != r || v.cols() != r {
        return Err(Error::Shape {
            op: "reconstruct",
            lhs: u.shape(),
            rhs: v.shape(),
        });
    }
    let (m, n) = (u.rows(), v.rows());
    let mut out = vec![0.0; m * n];
    for (l, &s) in sigma.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let vl: Vec<f64> = (0..n).map(|j| v.get(j, l)).collect();
        for i in 0..m {
            let coef = u.get(i, l) * s;
            if coef == 0.0 {
                continue;
            }
            for (o, &vj) in out[i * n..(i + 1) * n].iter_mut().zip(&vl) {
                *o += coef * vj;
            }
        }
    }
    Matrix::from_vec_checked(m, n, out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn jacobi_tall(x: &Matrix) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let fro2: f64 = x.data().iter().map(|v| v * v).sum();
    // Pairs are orthogonal when |a_p·a_q| is tiny relative to the columns,
    // or at the rounding floor of the whole matrix.
    let rel_tol = (m as f64).sqrt() * f64::EPSILON;
    let abs_tol = m as f64 * f64::EPSILON * fro2;

    let mut converged = fro2 == 0.0;
    let mut residual = 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= abs_tol || gamma.abs() <= rel_tol * alpha.sqrt() * beta.sqrt() {
                    continue;
                }
                residual = residual.max(gamma.abs() / fro2);
                rotated = true;

                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Convergence { sweeps, residual });
    }

    let norms: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    // Columns at the rounding floor carry no direction; their U columns are
    // completed from the standard basis instead.
    let floor = (m as f64) * f64::EPSILON * fro2.sqrt();
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v_sorted = Vec::with_capacity(n);
    for &j in &order {
        let s = norms[j];
        let candidate = if s > floor {
            let mut u: Vec<f64> = cols[j].iter().map(|v| v / s).collect();
            orthogonalize(&mut u, &ucols);
            normalize(&mut u).then_some(u)
        } else {
            None
        };
        let u = match candidate {
            Some(u) => u,
            None => complete_basis(m, &ucols),
        };
        ucols.push(u);
        sigma.push(s);
        v_sorted.push(vcols[j].clone());
    }

    Ok(SvdFactors {
        u: Matrix::from_columns(&ucols)?,
        sigma,
        v: Matrix::from_columns(&v_sorted)?,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (a, b) = (&mut left[p], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

// Two passes of modified Gram-Schmidt.
fn orthogonalize(u: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let proj = dot(u, b);
            for (x, y) in u.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
    }
}

fn normalize(u: &mut [f64]) -> bool {
    let norm = dot(u, u).sqrt();
    if norm < 0.5 {
        return false;
    }
    u.iter_mut().for_each(|x| *x /= norm);
    true
}

fn complete_basis(m: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        // some e_i keeps a complement component of norm >= sqrt((m - k) / m)
        let norm = dot(&e, &e).sqrt();
        if norm > 1e-3 {
            e.iter_mut().for_each(|x| *x /= norm);
            orthogonalize(&mut e, basis);
            let norm = dot(&e, &e).sqrt();
            e.iter_mut().for_each(|x| *x /= norm);
            return e;
        }
    }
    unreachable!("fewer than m basis vectors always leave a complement")
}
