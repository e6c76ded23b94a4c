//! The generalized geometric-median objective
//! `F_α(x) = (1/n) Σ ‖x − x_i‖_A + (α/2)‖x − x₀‖²`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::metric::DiagonalMetric;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// `n × d` matrix of records, one feature vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianDataset {
    points: Matrix,
    split: Split,
    /// Columns holding at least one nonzero entry. Distances over the
    /// remaining columns only depend on the query point.
    active: Vec<usize>,
}

impl MedianDataset {
    pub fn new(points: Matrix, split: Split) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if points.cols() == 0 {
            return Err(Error::InvalidConfig("dataset dimension must be at least 1".into()));
        }
        if let Some(pos) = points.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "non-finite entry at row {}, column {}",
                pos / points.cols(),
                pos % points.cols()
            )));
        }
        let active = (0..points.cols())
            .filter(|&j| (0..points.rows()).any(|i| points.get(i, j) != 0.0))
            .collect();
        Ok(Self {
            points,
            split,
            active,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], split: Split) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, split)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn active_columns(&self) -> &[usize] {
        &self.active
    }

    /// Mean of `‖x − x_i‖_A` over all records.
    pub fn mean_distance(&self, x: &[f64], metric: &DiagonalMetric) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), metric.dim())?;
        let a = metric.diag();
        let mut inactive = vec![true; self.dim()];
        for &j in &self.active {
            inactive[j] = false;
        }
        let tail: f64 = (0..self.dim())
            .filter(|&j| inactive[j])
            .map(|j| a[j] * x[j] * x[j])
            .sum();
        let total: f64 = (0..self.len())
            .map(|i| {
                let p = self.point(i);
                let lead: f64 = self
                    .active
                    .iter()
                    .map(|&j| {
                        let diff = x[j] - p[j];
                        a[j] * diff * diff
                    })
                    .sum();
                libm::sqrt(lead + tail)
            })
            .sum();
        Ok(total / self.len() as f64)
    }
}

/// `‖x − x_i‖_A`
pub fn per_example_loss(x: &[f64], xi: &[f64], metric: &DiagonalMetric) -> Result<f64> {
    check_dim(metric.dim(), x.len())?;
    check_dim(metric.dim(), xi.len())?;
    let sq: f64 = metric
        .diag()
        .iter()
        .zip(x.iter().zip(xi))
        .map(|(a, (u, v))| a * (u - v) * (u - v))
        .sum();
    Ok(libm::sqrt(sq))
}

/// Writes `A(x − x_i)/‖x − x_i‖_A` into `out`, or zero at the kink `x = x_i`.
pub(crate) fn subgradient_into(x: &[f64], xi: &[f64], diag: &[f64], out: &mut [f64]) {
    let mut sq = 0.0;
    for ((o, a), (u, v)) in out.iter_mut().zip(diag).zip(x.iter().zip(xi)) {
        let w = a * (u - v);
        *o = w;
        sq += w * (u - v);
    }
    if sq > 0.0 {
        let inv = 1.0 / libm::sqrt(sq);
        out.iter_mut().for_each(|o| *o *= inv);
    } else {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// A subgradient of `‖· − x_i‖_A` at `x`; the zero vector at `x = x_i`.
/// Its ℓ₂ norm never exceeds `λ₁(A^{1/2})`.
pub fn per_example_subgradient(x: &[f64], xi: &[f64], metric: &DiagonalMetric) -> Result<Vec<f64>> {
    check_dim(metric.dim(), x.len())?;
    check_dim(metric.dim(), xi.len())?;
    let mut out = vec![0.0; x.len()];
    subgradient_into(x, xi, metric.diag(), &mut out);
    Ok(out)
}

fn ridge(x: &[f64], x0: &[f64]) -> f64 {
    x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `F_α(x) = (1/n) Σ ‖x − x_i‖_A + (α/2)‖x − x₀‖₂²`
pub fn regularized_empirical_loss(
    x: &[f64],
    dataset: &MedianDataset,
    metric: &DiagonalMetric,
    alpha: f64,
    x0: &[f64],
) -> Result<f64> {
    check_alpha(alpha)?;
    check_dim(dataset.dim(), x0.len())?;
    let mean = dataset.mean_distance(x, metric)?;
    Ok(mean + 0.5 * alpha * ridge(x, x0))
}

/// `(1/n) Σ ∇f_i(x) + α(x − x₀)`
pub fn empirical_gradient(
    x: &[f64],
    dataset: &MedianDataset,
    metric: &DiagonalMetric,
    alpha: f64,
    x0: &[f64],
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_dim(dataset.dim(), x.len())?;
    check_dim(dataset.dim(), x0.len())?;
    check_dim(dataset.dim(), metric.dim())?;
    let d = dataset.dim();
    let mut total = vec![0.0; d];
    let mut g = vec![0.0; d];
    for i in 0..dataset.len() {
        subgradient_into(x, dataset.point(i), metric.diag(), &mut g);
        total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
    }
    let n = dataset.len() as f64;
    for j in 0..d {
        total[j] = total[j] / n + alpha * (x[j] - x0[j]);
    }
    Ok(total)
}

/// Mean `‖x̄ − x‖_A` over a held-out set.
pub fn estimate_population_loss(
    xbar: &[f64],
    test: &MedianDataset,
    metric: &DiagonalMetric,
) -> Result<f64> {
    test.mean_distance(xbar, metric)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            constraint: "alpha >= 0",
        })
    }
}

/// Synthetic records: the first `d_min` coordinates are independent
/// `Normal(1, 1)` draws, the rest are exactly zero.
///
/// Rows are drawn in order with `d_min` normals each, so the leading block
/// depends only on `(n, d_min, seed)` and not on `d`.
pub fn generate_shifted_gaussian_data(n: usize, d: usize, d_min: usize, seed: u64) -> Result<MedianDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if d_min == 0 || d < d_min {
        return Err(Error::InvalidConfig(format!(
            "need d >= d_min >= 1, got d = {d}, d_min = {d_min}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        for v in &mut row[..d_min] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = 1.0 + z;
        }
    }
    MedianDataset::new(Matrix::from_row_major(n, d, data)?, Split::Train)
}
