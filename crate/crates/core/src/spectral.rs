//! Principal components of gradient traces.
//!
//! The top singular values of a trace `H` (`r × p`) are obtained by
//! orthogonal iteration on the smaller Gram matrix (`HHᵀ` when `r ≤ p`,
//! otherwise `HᵀH`), followed by a Rayleigh–Ritz step on the converged
//! subspace. The decay of the spectrum is summarized by a least-squares line
//! through `(ln i, ln σ_i)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, householder_q, norm2, orthonormalize, symmetric_eigen, Matrix};
use crate::projector::SubspaceProjector;

/// Default number of orthogonal iterations.
pub const DEFAULT_ITERS: usize = 10;

/// Extra columns carried through the iteration beyond the `k` requested.
pub const OVERSAMPLE: usize = 10;

/// Singular values below this fraction of `σ₁` are left out of fits.
pub const FIT_FLOOR: f64 = 1e-12;

/// Rows of pre-noise averaged gradients collected along a run.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTrace {
    h: Matrix,
    step_indices: Vec<usize>,
}

impl GradientTrace {
    pub fn new(h: Matrix, step_indices: Vec<usize>) -> Result<Self> {
        if h.rows() == 0 || h.cols() == 0 {
            return Err(Error::InvalidConfig("gradient trace needs r >= 1 and p >= 1".into()));
        }
        check_dim(h.rows(), step_indices.len())?;
        if h.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("gradient trace has non-finite entries".into()));
        }
        Ok(Self { h, step_indices })
    }

    /// Trace without step bookkeeping; rows are numbered `1..=r`.
    pub fn from_matrix(h: Matrix) -> Result<Self> {
        let steps = (1..=h.rows()).collect();
        Self::new(h, steps)
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>, steps: Vec<usize>) -> Result<Self> {
        Self::new(Matrix::from_row_major(rows, cols, data)?, steps)
    }

    pub fn rows(&self) -> usize {
        self.h.rows()
    }

    pub fn cols(&self) -> usize {
        self.h.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.h
    }

    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }
}

/// Least-squares line through `(ln i, ln σ_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Inclusive 1-based rank range actually fitted.
    pub lo: usize,
    pub hi: usize,
}

impl PowerLawFit {
    /// Decay exponent `c` in `σ_i ∝ i^{−c}`.
    pub fn decay_exponent(&self) -> f64 {
        -self.slope
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// `σ_1 ≥ … ≥ σ_k ≥ 0`.
    pub singular_values: Vec<f64>,
    /// `p × k`, orthonormal columns (right singular vectors).
    pub basis: Matrix,
    /// `None` when fewer than two singular values clear the fit floor.
    pub fit: Option<PowerLawFit>,
    pub iters: usize,
}

/// Top-`k` singular values and right singular vectors of the trace by
/// `iters` rounds of orthogonal iteration from a seeded Gaussian start.
///
/// The block carries up to [`OVERSAMPLE`] extra columns, which makes the
/// leading values converge at the rate `λ_{k+OVERSAMPLE+1}/λ_i` instead of
/// `λ_{k+1}/λ_k`; only the top `k` Ritz pairs are returned.
pub fn orthogonal_iteration_svd(
    trace: &GradientTrace,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<SpectralReport> {
    let h = trace.matrix();
    let (r, p) = (h.rows(), h.cols());
    if k == 0 || k > r.min(p) {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
            constraint: "1 <= k <= min(r, p)",
        });
    }
    if iters == 0 {
        return Err(Error::OutOfRange {
            name: "iters",
            value: 0.0,
            constraint: "iters >= 1",
        });
    }

    let use_rows = r <= p;
    let gram = if use_rows { h.gram_rows() } else { h.gram_cols() };
    let m = gram.rows();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = (k + OVERSAMPLE).min(m);
    let start: Vec<f64> = (0..m * b).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut q = householder_q(&Matrix::from_row_major(m, b, start)?);
    for _ in 0..iters {
        q = orthonormalize(&gram.matmul(&q)?);
    }

    // Rayleigh–Ritz on span(Q).
    let gq = gram.matmul(&q)?;
    let mut ritz = q.t_matmul(&gq)?;
    for i in 0..b {
        for j in 0..i {
            let avg = 0.5 * (ritz.get(i, j) + ritz.get(j, i));
            ritz.set(i, j, avg);
            ritz.set(j, i, avg);
        }
    }
    let (theta, w) = symmetric_eigen(&ritz);
    let mut top_w = Matrix::zeros(b, k);
    for i in 0..b {
        top_w.row_mut(i).copy_from_slice(&w.row(i)[..k]);
    }
    let u = q.matmul(&top_w)?;
    let singular_values: Vec<f64> = theta[..k].iter().map(|&l| libm::sqrt(l.max(0.0))).collect();

    let basis = if use_rows {
        right_vectors_from_left(h, &u, &singular_values)?
    } else {
        u
    };

    let fit_hi = k.min(1000);
    let fit = fit_spectrum(&singular_values, 1, fit_hi).ok();

    Ok(SpectralReport {
        singular_values,
        basis,
        fit,
        iters,
    })
}

/// `v_i = Hᵀ u_i / σ_i`; columns with a negligible `σ_i` are replaced by an
/// orthonormal completion.
fn right_vectors_from_left(h: &Matrix, u: &Matrix, sv: &[f64]) -> Result<Matrix> {
    let p = h.cols();
    let k = u.cols();
    let v = h.t_matmul(u)?;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut missing = Vec::new();
    for (j, &s) in sv.iter().enumerate() {
        if s > 0.0 && s > FIT_FLOOR * s1 {
            cols.push(v.column(j).iter().map(|x| x / s).collect());
        } else {
            cols.push(Vec::new());
            missing.push(j);
        }
    }
    let mut candidate = 0usize;
    for j in missing {
        loop {
            assert!(candidate < p, "ran out of completion directions");
            let mut e = vec![0.0; p];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram–Schmidt passes against the accepted columns.
            for _ in 0..2 {
                for c in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(c, &e);
                    e.iter_mut().zip(c).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[j] = e;
                break;
            }
        }
    }
    let mut out = Matrix::zeros(p, k);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..p {
            out.set(i, j, c[i]);
        }
    }
    Ok(out)
}

/// Ordinary least squares of `ln σ_i` on `ln i` over `i ∈ [lo, hi]` (1-based).
pub fn powerlaw_fit(singular_values: &[f64], lo: usize, hi: usize) -> Result<PowerLawFit> {
    if lo == 0 || hi > singular_values.len() || hi <= lo {
        return Err(Error::InvalidConfig(alloc::format!(
            "fit range [{lo}, {hi}] must satisfy 1 <= lo < hi <= {}",
            singular_values.len()
        )));
    }
    let bad: Vec<usize> = (lo..=hi)
        .filter(|&i| !(singular_values[i - 1] > 0.0 && singular_values[i - 1].is_finite()))
        .collect();
    if !bad.is_empty() {
        return Err(Error::NonPositiveValues(bad));
    }
    let xs: Vec<f64> = (lo..=hi).map(|i| libm::log(i as f64)).collect();
    let ys: Vec<f64> = (lo..=hi).map(|i| libm::log(singular_values[i - 1])).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerLawFit {
        slope,
        intercept,
        r2,
        lo,
        hi,
    })
}

/// Fit over `[lo, hi]` after dropping values below `FIT_FLOOR · σ₁`.
pub fn fit_spectrum(singular_values: &[f64], lo: usize, hi: usize) -> Result<PowerLawFit> {
    let s1 = singular_values.first().copied().unwrap_or(0.0);
    let usable = singular_values
        .iter()
        .take_while(|&&s| s > 0.0 && s > FIT_FLOOR * s1)
        .count();
    powerlaw_fit(singular_values, lo, hi.min(usable))
}

/// Projector onto the first `k` principal components of a report.
pub fn build_projector_from_report(report: &SpectralReport, k: usize) -> Result<SubspaceProjector> {
    let width = report.basis.cols();
    if k > width {
        return Err(Error::OutOfRange {
            name: "k",
            value: k as f64,
            constraint: "k <= number of computed components",
        });
    }
    let p = report.basis.rows();
    let mut basis = Matrix::zeros(p, k);
    for i in 0..p {
        basis.row_mut(i).copy_from_slice(&report.basis.row(i)[..k]);
    }
    SubspaceProjector::from_basis(basis)
}
