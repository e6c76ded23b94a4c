//! Differentially private convex optimization under restricted Lipschitz
//! continuity.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the algorithmic core:
//!
//! - [`metric`]: diagonal Mahalanobis metrics and their restricted Lipschitz
//!   coefficients,
//! - [`loss`]: the generalized geometric-median objective and a synthetic
//!   low-rank data generator,
//! - [`sgd`]: DP-SGD with clipping, subspace projection and gradient traces,
//! - [`privacy`]: noise calibration, theorem parameters and excess-risk
//!   bounds,
//! - [`spectral`]: orthogonal-iteration PCA of gradient traces and power-law
//!   fits of their spectra.

#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod loss;
pub mod metric;
pub mod privacy;
pub mod projector;
pub mod rng;
pub mod sgd;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use loss::{
    empirical_gradient, estimate_population_loss, generate_shifted_gaussian_data, per_example_loss,
    per_example_subgradient, regularized_empirical_loss, MedianDataset, Split,
};
pub use metric::{mahalanobis_norm, restricted_coeffs, top_k_projector, DiagonalMetric, MetricKind};
pub use privacy::{
    calibrate_sigma, decay_rate_bound, erm_bound, optimal_k, sco_bound, theorem_params,
    BoundTerms, PrivacyBudget, TheoremParams, DEFAULT_C1, DEFAULT_C2,
};
pub use projector::SubspaceProjector;
pub use sgd::{
    collect_gradient_trace, dpsgd_run, run_dpsgd, GeometricMedian, Objective, RunResult,
    SgdConfig, StepView,
};
pub use spectral::{
    build_projector_from_report, orthogonal_iteration_svd, powerlaw_fit, GradientTrace,
    PowerLawFit, SpectralReport,
};
