//! Dense reference implementations used only by tests.
//!
//! Kept separate from the library code paths: plain `Vec<Vec<f64>>`
//! storage, classical Gram–Schmidt for random orthogonal factors, and a
//! textbook cyclic Jacobi eigen-solver.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, p);
    for i in 0..n {
        for l in 0..m {
            for j in 0..p {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

pub fn transpose(a: &Dense) -> Dense {
    let mut t = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            t[j][i] = *v;
        }
    }
    t
}

/// Random `n × k` matrix with orthonormal columns (Gram–Schmidt, twice).
pub fn random_orthonormal(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Dense {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / nrm).collect());
        }
    }
    let mut out = zeros(n, k);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[i][j] = c[i];
        }
    }
    out
}

/// `U diag(s) Vᵀ` with random orthonormal `U` (`r × m`) and `V` (`p × m`),
/// `m = s.len() ≤ min(r, p)`.
pub fn with_singular_values(r: usize, p: usize, s: &[f64], seed: u64) -> Dense {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = s.len();
    let u = random_orthonormal(r, m, &mut rng);
    let v = random_orthonormal(p, m, &mut rng);
    let mut us = u.clone();
    for row in us.iter_mut() {
        for (j, x) in row.iter_mut().enumerate() {
            *x *= s[j];
        }
    }
    mul(&us, &transpose(&v))
}

/// Eigenvalues (descending) and eigenvectors (columns) of a symmetric
/// matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut a = a.clone();
    let mut v = zeros(n, n);
    for i in 0..n {
        v[i][i] = 1.0;
    }
    for _ in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-40 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let mut vecs = zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        for k in 0..n {
            vecs[k][dst] = v[k][src];
        }
    }
    (vals, vecs)
}

/// Singular values of `h` (descending) from the eigenvalues of the smaller
/// Gram matrix.
pub fn singular_values(h: &Dense) -> Vec<f64> {
    let (r, p) = (h.len(), h[0].len());
    let g = if r <= p {
        mul(h, &transpose(h))
    } else {
        mul(&transpose(h), h)
    };
    jacobi_eigen(&g).0.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

pub fn flatten(h: &Dense) -> Vec<f64> {
    h.iter().flatten().copied().collect()
}

/// Decreasing singular values with `σ_k² / σ_{k+1}² ≥ gap`, roughly power-law.
pub fn gapped_spectrum(m: usize, k: usize, gap: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c: f64 = rng.random_range(0.3..1.2);
    let mut s: Vec<f64> = (1..=m)
        .map(|i| (i as f64).powf(-c) * (1.0 + rng.random_range(0.0..0.02)))
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let need = gap.sqrt() * 1.0001;
    if k < m && s[k - 1] / s[k] < need {
        let factor = s[k - 1] / (s[k] * need);
        for v in s.iter_mut().skip(k) {
            *v *= factor;
        }
    }
    s
}
