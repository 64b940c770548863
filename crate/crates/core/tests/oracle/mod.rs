//! Reference computations for tests, written independently of the library's
//! numerical paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use specfilter_core::Matrix;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Uniform entries in [-1, 1).
pub fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for l in 0..a.cols() {
                acc += a.get(i, l) * b.get(l, j);
            }
            out[i * b.cols() + j] = acc;
        }
    }
    Matrix::new(a.rows(), b.cols(), out).unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// sorted non-increasing.
#[allow(clippy::needless_range_loop)]
pub fn symmetric_eigenvalues(s: &Matrix) -> Vec<f64> {
    let n = s.rows();
    assert_eq!(n, s.cols());
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| s.row(i).to_vec()).collect();
    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - sn * akq;
                    a[k][q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - sn * aqk;
                    a[q][k] = sn * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Orthonormal columns by Gram-Schmidt on uniform random vectors.
pub fn orthonormal(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    while out.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for b in &out {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            out.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// `Σ σᵢ uᵢ vᵢᵀ`.
pub fn sum_of_outer(sigmas: &[f64], us: &[Vec<f64>], vs: &[Vec<f64>]) -> Matrix {
    let (m, n) = (us[0].len(), vs[0].len());
    let mut data = vec![0.0; m * n];
    for ((s, u), v) in sigmas.iter().zip(us).zip(vs) {
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += s * u[i] * v[j];
            }
        }
    }
    Matrix::new(m, n, data).unwrap()
}

/// Test matrix families: generic, rank-deficient and with tied singular values.
pub fn matrix_family(rng: &mut ChaCha20Rng, case: usize, rows: usize, cols: usize) -> Matrix {
    let r = rows.min(cols);
    match case % 3 {
        0 => random_matrix(rng, rows, cols),
        1 => {
            let rank = 1 + case % r.max(1);
            let rank = rank.min(r);
            let us = orthonormal(rng, rows, rank);
            let vs = orthonormal(rng, cols, rank);
            let sig: Vec<f64> = (0..rank).map(|i| 3.0 / (i as f64 + 1.0)).collect();
            sum_of_outer(&sig, &us, &vs)
        }
        _ => {
            let us = orthonormal(rng, rows, r);
            let vs = orthonormal(rng, cols, r);
            let sig: Vec<f64> = (0..r).map(|i| if i < r / 2 + 1 { 2.0 } else { 0.5 }).collect();
            sum_of_outer(&sig, &us, &vs)
        }
    }
}

pub fn orthogonality_deviation(q: &Matrix) -> f64 {
    let g = naive_matmul(&q.transpose(), q);
    let mut dev: f64 = 0.0;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g.get(i, j) - target).abs());
        }
    }
    dev
}

pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let base: f64 = b.data().iter().map(|y| y * y).sum();
    if base > 0.0 {
        (diff / base).sqrt()
    } else {
        diff.sqrt()
    }
}

pub fn frobenius_distance(a: &Matrix, b: &Matrix) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
