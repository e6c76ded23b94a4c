//! Diagonal Mahalanobis metrics `‖v‖_A = (vᵀ A v)^{1/2}` and their analytic
//! restricted Lipschitz coefficients.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::projector::SubspaceProjector;

/// Construction recipe for a [`DiagonalMetric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    /// `diag(1, …, 1)`
    Const,
    /// `diag(1, 1/√2, …, 1/√d)`
    Sqrt,
    /// `diag(1, 1/2, …, 1/d)`
    Linear,
    /// User-supplied entries, sorted at construction.
    Custom,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Const => "const",
            Self::Sqrt => "sqrt",
            Self::Linear => "linear",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "const" => Ok(Self::Const),
            "sqrt" => Ok(Self::Sqrt),
            "linear" => Ok(Self::Linear),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidMetric(format!("unknown metric kind '{other}'"))),
        }
    }
}

/// Positive diagonal matrix `A`, stored with non-increasing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMetric {
    diag: Vec<f64>,
    kind: MetricKind,
    /// `permutation[i]` is the user coordinate of stored coordinate `i`.
    permutation: Vec<usize>,
}

impl DiagonalMetric {
    /// Builds one of the named recipes in dimension `d`.
    ///
    /// Entry `j` (1-indexed) is `1`, `1/√j` or `1/j`.
    pub fn new(kind: MetricKind, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidMetric("dimension must be at least 1".into()));
        }
        let diag = (1..=d)
            .map(|j| {
                let j = j as f64;
                match kind {
                    MetricKind::Const => Ok(1.0),
                    MetricKind::Sqrt => Ok(1.0 / libm::sqrt(j)),
                    MetricKind::Linear => Ok(1.0 / j),
                    MetricKind::Custom => Err(Error::InvalidMetric(
                        "custom metrics need explicit entries; use DiagonalMetric::custom".into(),
                    )),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            diag,
            kind,
            permutation: (0..d).collect(),
        })
    }

    /// Builds a metric from arbitrary positive entries. Entries are sorted
    /// non-increasing (stable, so ties keep the lowest index first) and the
    /// permutation is recorded.
    pub fn custom(entries: &[f64]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidMetric("no diagonal entries".into()));
        }
        if let Some((j, &v)) = entries
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidMetric(format!(
                "entry {j} = {v} must be positive and finite"
            )));
        }
        let mut permutation: Vec<usize> = (0..entries.len()).collect();
        permutation.sort_by(|&a, &b| entries[b].total_cmp(&entries[a]));
        let diag = permutation.iter().map(|&i| entries[i]).collect();
        Ok(Self {
            diag,
            kind: MetricKind::Custom,
            permutation,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Maps a vector from user coordinates to the stored (sorted) order.
    pub fn to_internal(&self, user: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), user.len())?;
        Ok(self.permutation.iter().map(|&i| user[i]).collect())
    }

    /// Inverse of [`to_internal`](Self::to_internal).
    pub fn to_user(&self, internal: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), internal.len())?;
        let mut out = alloc::vec![0.0; internal.len()];
        for (pos, &i) in self.permutation.iter().enumerate() {
            out[i] = internal[pos];
        }
        Ok(out)
    }

    /// `vᵀ A v` without the square root.
    #[inline]
    pub fn squared_norm(&self, v: &[f64]) -> f64 {
        self.diag.iter().zip(v).map(|(a, x)| a * x * x).sum()
    }

    /// `‖v‖_A`.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(libm::sqrt(self.squared_norm(v)))
    }

    /// Restricted Lipschitz coefficients `G_0 ≥ … ≥ G_d = 0` of the
    /// average Mahalanobis distance: the eigenvalues of `A^{1/2}` followed
    /// by a trailing zero.
    pub fn restricted_coeffs(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.diag.iter().map(|&a| libm::sqrt(a)).collect();
        g.push(0.0);
        g
    }

    /// `G_0 = λ_1(A^{1/2})`, the per-example Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        libm::sqrt(self.diag[0])
    }

    /// Projector onto the span of the top-`k` eigenvectors of `A^{1/2}`.
    pub fn top_k_projector(&self, k: usize) -> Result<SubspaceProjector> {
        if k > self.dim() {
            return Err(Error::OutOfRange {
                name: "k",
                value: k as f64,
                constraint: "0 <= k <= d",
            });
        }
        SubspaceProjector::coordinates(self.dim(), (0..k).collect())
    }
}

/// `‖v‖_A` for a diagonal metric.
pub fn mahalanobis_norm(v: &[f64], metric: &DiagonalMetric) -> Result<f64> {
    metric.norm(v)
}

pub fn restricted_coeffs(metric: &DiagonalMetric) -> Vec<f64> {
    metric.restricted_coeffs()
}

pub fn top_k_projector(metric: &DiagonalMetric, k: usize) -> Result<SubspaceProjector> {
    metric.top_k_projector(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    /// Dense `xᵀ A x` oracle over a full d×d matrix.
    fn dense_quadratic(diag: &[f64], v: &[f64]) -> f64 {
        let d = diag.len();
        let mut total = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a_ij = if i == j { diag[i] } else { 0.0 };
                total += v[i] * a_ij * v[j];
            }
        }
        total
    }

    #[test]
    fn recipes() {
        let m = DiagonalMetric::new(MetricKind::Sqrt, 4).unwrap();
        assert_eq!(m.diag()[0], 1.0);
        assert!((m.diag()[3] - 0.5).abs() < 1e-15);
        let m = DiagonalMetric::new(MetricKind::Linear, 3).unwrap();
        assert_eq!(m.diag(), &[1.0, 0.5, 1.0 / 3.0]);
        assert!(DiagonalMetric::new(MetricKind::Const, 0).is_err());
        assert!(DiagonalMetric::new(MetricKind::Custom, 3).is_err());
    }

    #[test]
    fn norm_examples() {
        let c = DiagonalMetric::new(MetricKind::Const, 2).unwrap();
        assert_eq!(mahalanobis_norm(&[0.0, 0.0], &c).unwrap(), 0.0);
        assert_eq!(mahalanobis_norm(&[3.0, 4.0], &c).unwrap(), 5.0);
        let l = DiagonalMetric::new(MetricKind::Linear, 2).unwrap();
        let v = [1.0, 1.0];
        let got = mahalanobis_norm(&v, &l).unwrap();
        assert!((got - libm::sqrt(dense_quadratic(l.diag(), &v))).abs() < 1e-15);
        assert!((got - 1.224_744_871_391_589).abs() < 1e-12);
        assert!(matches!(
            mahalanobis_norm(&[1.0], &l),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn coefficient_examples() {
        let c = DiagonalMetric::new(MetricKind::Const, 3).unwrap();
        assert_eq!(restricted_coeffs(&c), vec![1.0, 1.0, 1.0, 0.0]);

        let l = DiagonalMetric::new(MetricKind::Linear, 4).unwrap();
        let expected = [1.0, 0.707_106_781, 0.577_350_269, 0.5, 0.0];
        for (g, e) in restricted_coeffs(&l).iter().zip(expected) {
            assert!((g - e).abs() < 1e-9);
        }

        let s = DiagonalMetric::new(MetricKind::Sqrt, 2).unwrap();
        let g = restricted_coeffs(&s);
        assert!((g[1] - libm::pow(2.0, -0.25)).abs() < 1e-15);
        assert!((g[1] - 0.840_896).abs() < 1e-6);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn projector_examples() {
        let l = DiagonalMetric::new(MetricKind::Linear, 3).unwrap();
        let p0 = top_k_projector(&l, 0).unwrap();
        assert_eq!(p0.project(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
        let p1 = top_k_projector(&l, 1).unwrap();
        assert_eq!(p1.project(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        let p3 = top_k_projector(&l, 3).unwrap();
        assert_eq!(p3.project(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(top_k_projector(&l, 4).is_err());
    }

    #[test]
    fn custom_metric_sorts_and_round_trips() {
        let m = DiagonalMetric::custom(&[0.25, 1.0, 0.5, 1.0]).unwrap();
        assert_eq!(m.diag(), &[1.0, 1.0, 0.5, 0.25]);
        // ties keep the lowest index first
        assert_eq!(m.permutation(), &[1, 3, 2, 0]);
        let user = [10.0, 20.0, 30.0, 40.0];
        let internal = m.to_internal(&user).unwrap();
        assert_eq!(internal, vec![20.0, 40.0, 30.0, 10.0]);
        assert_eq!(m.to_user(&internal).unwrap(), user.to_vec());
        assert!(DiagonalMetric::custom(&[1.0, 0.0]).is_err());
        assert!(DiagonalMetric::custom(&[1.0, f64::NAN]).is_err());
        assert!(DiagonalMetric::custom(&[]).is_err());
    }

    fn metric_strategy() -> impl Strategy<Value = DiagonalMetric> {
        prop_oneof![
            (1usize..12).prop_map(|d| DiagonalMetric::new(MetricKind::Const, d).unwrap()),
            (1usize..12).prop_map(|d| DiagonalMetric::new(MetricKind::Sqrt, d).unwrap()),
            (1usize..12).prop_map(|d| DiagonalMetric::new(MetricKind::Linear, d).unwrap()),
            proptest::collection::vec(0.01f64..10.0, 1..12)
                .prop_map(|e| DiagonalMetric::custom(&e).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn coeffs_non_increasing_with_single_trailing_zero(m in metric_strategy()) {
            let g = m.restricted_coeffs();
            prop_assert_eq!(g.len(), m.dim() + 1);
            prop_assert!(g.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(g.iter().filter(|&&x| x == 0.0).count(), 1);
            prop_assert_eq!(*g.last().unwrap(), 0.0);
            prop_assert_eq!(g[0], m.lipschitz());
        }

        #[test]
        fn norm_is_a_norm(
            m in metric_strategy(),
            seed in proptest::collection::vec(-5.0f64..5.0, 36),
            scale in -4.0f64..4.0,
        ) {
            let d = m.dim();
            let (x, rest) = seed.split_at(d);
            let y = &rest[..d];
            let sum: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
            let nx = m.norm(x).unwrap();
            let ny = m.norm(y).unwrap();
            prop_assert!(m.norm(&sum).unwrap() <= nx + ny + 1e-10);
            let scaled: Vec<f64> = x.iter().map(|a| scale * a).collect();
            prop_assert!((m.norm(&scaled).unwrap() - libm::fabs(scale) * nx).abs() <= 1e-10);
        }
    }
}
