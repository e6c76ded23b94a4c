use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Orthogonal projection onto a `k`-dimensional subspace of `ℝ^d`.
///
/// Two representations are kept: a coordinate mask (the metric's top-k
/// eigenvectors are coordinate axes) and a dense orthonormal basis (the
/// principal components of a gradient trace). Both expose the same
/// `P v = B (Bᵀ v)` semantics.
#[derive(Debug, Clone, PartialEq)]
pub enum SubspaceProjector {
    Coordinates { dim: usize, indices: Vec<usize> },
    /// Columns of `basis` (`dim × rank`) are orthonormal.
    Dense { basis: Matrix },
}

impl SubspaceProjector {
    pub fn coordinates(dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(Error::OutOfRange {
                name: "coordinate index",
                value: bad as f64,
                constraint: "must be < dimension",
            });
        }
        Ok(Self::Coordinates { dim, indices })
    }

    /// Wraps a basis whose columns are orthonormal within 1e-8 per entry.
    pub fn from_basis(basis: Matrix) -> Result<Self> {
        let gram = basis.t_matmul(&basis)?;
        for i in 0..gram.rows() {
            for j in 0..gram.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                if libm::fabs(gram.get(i, j) - target) > 1e-8 {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "projector basis is not orthonormal (entry ({i}, {j}) of BᵀB is {})",
                        gram.get(i, j)
                    )));
                }
            }
        }
        Ok(Self::Dense { basis })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Coordinates { dim, .. } => *dim,
            Self::Dense { basis } => basis.rows(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Self::Coordinates { indices, .. } => indices.len(),
            Self::Dense { basis } => basis.cols(),
        }
    }

    /// The orthonormal basis as a `dim × rank` matrix.
    pub fn basis(&self) -> Matrix {
        match self {
            Self::Coordinates { dim, indices } => {
                let mut b = Matrix::zeros(*dim, indices.len());
                for (col, &i) in indices.iter().enumerate() {
                    b.set(i, col, 1.0);
                }
                b
            }
            Self::Dense { basis } => basis.clone(),
        }
    }

    /// Writes `P v` into `out`.
    pub fn project_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), v.len())?;
        check_dim(self.dim(), out.len())?;
        match self {
            Self::Coordinates { indices, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for &i in indices {
                    out[i] = v[i];
                }
            }
            Self::Dense { basis } => {
                let k = basis.cols();
                let mut coeffs = vec![0.0; k];
                for (i, &vi) in v.iter().enumerate() {
                    if vi != 0.0 {
                        axpy(vi, basis.row(i), &mut coeffs);
                    }
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = dot(basis.row(i), &coeffs);
                }
            }
        }
        Ok(())
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.project_into(v, &mut out)?;
        Ok(out)
    }

    /// `(I − P) v`
    pub fn residual(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(v)?;
        Ok(v.iter().zip(&p).map(|(a, b)| a - b).collect())
    }
}
