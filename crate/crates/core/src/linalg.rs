//! Small dense linear-algebra kernels used by the spectral module.
//!
//! Everything here works on row-major `f64` storage and is sized for the
//! regimes this crate deals with (Gram matrices of a few thousand rows at
//! most, Ritz problems of a few hundred).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            check_dim(cols, row.len())?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (l, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(l), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dim(self.rows, other.rows)?;
        let mut out = Matrix::zeros(self.cols, other.cols);
        for l in 0..self.rows {
            let b = other.row(l);
            for (i, &a) in self.row(l).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b, &mut out.data[i * other.cols..(i + 1) * other.cols]);
            }
        }
        Ok(out)
    }

    /// `self * selfᵀ` (rows × rows), exploiting symmetry.
    pub fn gram_rows(&self) -> Matrix {
        let n = self.rows;
        let mut g = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                g.data[i * n + j] = v;
                g.data[j * n + i] = v;
            }
        }
        g
    }

    /// `selfᵀ * self` (cols × cols).
    pub fn gram_cols(&self) -> Matrix {
        let p = self.cols;
        let mut g = Matrix::zeros(p, p);
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                // Upper triangle only; mirrored below.
                axpy(a, &row[i..], &mut g.data[i * p + i..(i + 1) * p]);
            }
        }
        for i in 0..p {
            for j in 0..i {
                g.data[i * p + j] = g.data[j * p + i];
            }
        }
        g
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Thin Householder QR: returns the `m × k` orthonormal factor `Q` of an
/// `m × k` input (`m ≥ k`), with the signs chosen so that `diag(R) ≥ 0`.
///
/// Rank-deficient columns are handled: the reflector for a zero column is
/// the identity, so `Q` stays orthonormal.
pub fn householder_q(a: &Matrix) -> Matrix {
    let (m, k) = (a.rows, a.cols);
    assert!(m >= k, "householder_q needs rows >= cols");
    // Column-major working copy.
    let mut w: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r_sign = vec![1.0; k];

    for j in 0..k {
        let x = &w[j][j..];
        let norm_x = norm2(x);
        let mut v = x.to_vec();
        if norm_x == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm_x } else { norm_x };
        v[0] -= alpha;
        let vnorm = norm2(&v);
        if vnorm == 0.0 {
            reflectors.push(Vec::new());
            r_sign[j] = if alpha < 0.0 { -1.0 } else { 1.0 };
            continue;
        }
        for vi in &mut v {
            *vi /= vnorm;
        }
        // R_jj = alpha.
        r_sign[j] = if alpha < 0.0 { -1.0 } else { 1.0 };
        for col in w.iter_mut().skip(j) {
            let s = 2.0 * dot(&v, &col[j..]);
            axpy(-s, &v, &mut col[j..]);
        }
        reflectors.push(v);
    }

    // Accumulate Q = H_1 ⋯ H_k applied to the first k columns of I.
    let mut q: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        for col in q.iter_mut() {
            let s = 2.0 * dot(v, &col[j..]);
            axpy(-s, v, &mut col[j..]);
        }
    }

    let mut out = Matrix::zeros(m, k);
    for (j, col) in q.iter().enumerate() {
        let sgn = r_sign[j];
        for i in 0..m {
            out.data[i * k + j] = sgn * col[i];
        }
    }
    out
}

/// Orthonormalizes the columns of `a` with a Householder QR followed by one
/// re-orthogonalization pass.
pub fn orthonormalize(a: &Matrix) -> Matrix {
    householder_q(&householder_q(a))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in non-increasing order and the matching
/// eigenvectors as the columns of an `n × n` matrix.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows;
    assert_eq!(n, a.cols, "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Matrix::identity(n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        let scale: f64 = m.data.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for r in 0..n {
                    let mrp = m.get(r, p);
                    let mrq = m.get(r, q);
                    m.set(r, p, c * mrp - s * mrq);
                    m.set(r, q, s * mrp + c * mrq);
                }
                for r in 0..n {
                    let mpr = m.get(p, r);
                    let mqr = m.get(q, r);
                    m.set(p, r, c * mpr - s * mqr);
                    m.set(q, r, s * mpr + c * mqr);
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, dst, v.get(r, src));
        }
    }
    (values, vectors)
}
