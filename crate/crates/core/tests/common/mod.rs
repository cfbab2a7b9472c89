#![allow(dead_code)]

pub mod gradcheck;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues
/// (ascending) and eigenvectors as columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let vals = idx.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (vals, vecs)
}

/// Generalized eigenvalues of `(s1, s1 + s2)`, descending, through the
/// Jacobi solver only.
pub fn jacobi_generalized(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Vec<f64> {
    let (vals, vecs) = jacobi_eigen(&(s1 + s2));
    let n = s1.nrows();
    let inv_sqrt = DMatrix::from_fn(n, n, |r, c| vecs[(r, c)] / vals[c].sqrt());
    let white = inv_sqrt.transpose() * s1 * &inv_sqrt;
    let white = (&white + white.transpose()) * 0.5;
    let mut d = jacobi_eigen(&white).0;
    d.reverse();
    d
}

/// Random trace-1 SPD matrix `A A^T + c I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_vec(n, n, gaussian_vec(rng, n * n));
    let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
    let tr = m.trace();
    m / tr
}

/// Relative error of two gradient vectors, `||a - b|| / max(||a||, ||b||)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Log-variance of every channel of a `[time][channel]` channels-last
/// block.
pub fn log_var_channels_last(values: &[f64], n_channels: usize) -> Vec<f64> {
    let t = values.len() / n_channels;
    (0..n_channels)
        .map(|c| {
            let mean = (0..t).map(|n| values[n * n_channels + c]).sum::<f64>() / t as f64;
            let var = (0..t)
                .map(|n| (values[n * n_channels + c] - mean).powi(2))
                .sum::<f64>()
                / t as f64;
            var.max(1e-300).ln()
        })
        .collect()
}

/// Two-class Fisher linear discriminant with a small ridge.
pub struct Lda {
    w: Vec<f64>,
    b: f64,
}

impl Lda {
    pub fn fit(x: &[Vec<f64>], y: &[usize]) -> Self {
        let d = x[0].len();
        let mean = |c: usize| {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
            let m: Vec<f64> = (0..d)
                .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
                .collect();
            m
        };
        let (m0, m1) = (mean(0), mean(1));
        let mut s = DMatrix::<f64>::zeros(d, d);
        for (r, &l) in x.iter().zip(y) {
            let m = if l == 0 { &m0 } else { &m1 };
            let v = DMatrix::from_fn(d, 1, |i, _| r[i] - m[i]);
            s += &v * v.transpose();
        }
        s /= x.len() as f64;
        let ridge = 1e-6 * s.trace() / d as f64 + 1e-12;
        s += DMatrix::identity(d, d) * ridge;
        let diff = DMatrix::from_fn(d, 1, |i, _| m1[i] - m0[i]);
        let w = s.lu().solve(&diff).expect("regularised scatter is invertible");
        let w: Vec<f64> = w.iter().copied().collect();
        let mid: Vec<f64> = (0..d).map(|i| 0.5 * (m0[i] + m1[i])).collect();
        let b = -w.iter().zip(&mid).map(|(a, b)| a * b).sum::<f64>();
        Self { w, b }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let s: f64 = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b;
        usize::from(s > 0.0)
    }
}
