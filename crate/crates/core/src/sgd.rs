//! DP-SGD on a regularized finite-sum objective.
//!
//! Each step samples `batch_size` examples uniformly with replacement,
//! averages their (optionally clipped) subgradients, optionally projects the
//! average onto a subspace, and then takes
//!
//! ```text
//! x ← x − η (g + α (x − x₀) + G ζ),   ζ ~ N(0, σ² I_d)
//! ```
//!
//! The noise is always drawn in the full ambient space, including when the
//! signal gradient is projected.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::linalg::norm2;
use crate::loss::{subgradient_into, MedianDataset};
use crate::metric::DiagonalMetric;
use crate::privacy::TheoremParams;
use crate::projector::SubspaceProjector;
use crate::rng::RunStreams;
use crate::spectral::GradientTrace;

/// A finite-sum objective `(1/n) Σ f_i(x)` as seen by the optimizer.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Number of examples `n`.
    fn len(&self) -> usize;

    /// Writes a subgradient of `f_i` at `x` into `out`.
    fn example_subgradient(&self, x: &[f64], i: usize, out: &mut [f64]);

    /// `(1/n) Σ f_i(x)`, unregularized.
    fn mean_loss(&self, x: &[f64]) -> f64;
}

/// The average Mahalanobis distance to a dataset.
#[derive(Debug, Clone, Copy)]
pub struct GeometricMedian<'a> {
    dataset: &'a MedianDataset,
    metric: &'a DiagonalMetric,
}

impl<'a> GeometricMedian<'a> {
    pub fn new(dataset: &'a MedianDataset, metric: &'a DiagonalMetric) -> Result<Self> {
        check_dim(dataset.dim(), metric.dim())?;
        Ok(Self { dataset, metric })
    }
}

impl Objective for GeometricMedian<'_> {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn len(&self) -> usize {
        self.dataset.len()
    }

    fn example_subgradient(&self, x: &[f64], i: usize, out: &mut [f64]) {
        subgradient_into(x, self.dataset.point(i), self.metric.diag(), out);
    }

    fn mean_loss(&self, x: &[f64]) -> f64 {
        self.dataset
            .mean_distance(x, self.metric)
            .expect("dimensions checked at construction")
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Number of updates `T`.
    pub steps: usize,
    pub eta: f64,
    pub alpha: f64,
    /// Noise multiplier `σ`.
    pub sigma: f64,
    /// Lipschitz constant `G` scaling the noise.
    pub g0: f64,
    pub batch_size: usize,
    /// Per-example ℓ₂ clip threshold.
    pub clip: Option<f64>,
    pub seed: u64,
    /// Record the pre-noise averaged gradient every this many steps.
    pub trace_every: Option<usize>,
    /// Loss-trajectory spacing; `None` means `max(1, T / 1000)`.
    pub loss_every: Option<usize>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            steps: 1,
            eta: 0.01,
            alpha: 0.0,
            sigma: 0.0,
            g0: 1.0,
            batch_size: 1,
            clip: None,
            seed: 0,
            trace_every: None,
            loss_every: None,
        }
    }
}

impl SgdConfig {
    /// Step count, noise, learning rate and regularization from a theorem
    /// parameter set.
    pub fn from_theorem(params: &TheoremParams, g0: f64, seed: u64) -> Self {
        Self {
            steps: params.steps,
            eta: params.eta,
            alpha: params.alpha,
            sigma: params.sigma,
            g0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what}")));
        if self.steps == 0 {
            return bad("T must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(&format!("eta must be positive, got {}", self.eta));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(&format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(&format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.g0 > 0.0 && self.g0.is_finite()) {
            return bad(&format!("g0 must be positive, got {}", self.g0));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(&format!("batch_size must lie in [1, {n}], got {}", self.batch_size));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(&format!("clip must be positive, got {c}"));
            }
        }
        if self.trace_every == Some(0) {
            return bad("trace_every must be positive");
        }
        if self.loss_every == Some(0) {
            return bad("loss_every must be positive");
        }
        Ok(())
    }

    pub fn loss_spacing(&self) -> usize {
        self.loss_every.unwrap_or((self.steps / 1000).max(1))
    }
}

/// Output of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// `x̄ = (1/T) Σ_{t=1}^T x^{(t)}`; `x^{(0)}` is not included.
    pub xbar: Vec<f64>,
    /// `(t, F_α(x^{(t)}))` at the recorded steps.
    pub loss_trajectory: Vec<(usize, f64)>,
    /// Unregularized empirical loss at `x̄`.
    pub final_empirical_loss: f64,
    /// Held-out estimate, filled in by callers that have a test set.
    pub population_loss: Option<f64>,
    pub trace: Option<GradientTrace>,
}

/// What an observer sees after each update.
#[derive(Debug)]
pub struct StepView<'a> {
    /// 1-based step index.
    pub step: usize,
    /// `x^{(t)}` after the update.
    pub iterate: &'a [f64],
    /// Averaged (clipped) gradient before projection and noise.
    pub gradient: &'a [f64],
    /// The projected gradient when a projector is in use.
    pub projected: Option<&'a [f64]>,
}

/// Scales `g` down to ℓ₂ norm `clip` when it is longer.
pub fn clip_to_norm(g: &mut [f64], clip: f64) {
    let n = norm2(g);
    if n > clip {
        let s = clip / n;
        g.iter_mut().for_each(|v| *v *= s);
    }
}

/// Runs DP-SGD on the geometric-median objective.
pub fn dpsgd_run(
    config: &SgdConfig,
    dataset: &MedianDataset,
    metric: &DiagonalMetric,
    x0: &[f64],
    projector: Option<&SubspaceProjector>,
) -> Result<RunResult> {
    let objective = GeometricMedian::new(dataset, metric)?;
    run_dpsgd(config, &objective, x0, projector, |_| {})
}

/// Runs DP-SGD on any [`Objective`], calling `observer` after every update.
///
/// The result is a deterministic function of the inputs.
pub fn run_dpsgd<O, F>(
    config: &SgdConfig,
    objective: &O,
    x0: &[f64],
    projector: Option<&SubspaceProjector>,
    mut observer: F,
) -> Result<RunResult>
where
    O: Objective + ?Sized,
    F: FnMut(&StepView<'_>),
{
    let d = objective.dim();
    let n = objective.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    check_dim(d, x0.len())?;
    if let Some(p) = projector {
        check_dim(d, p.dim())?;
    }
    config.validate(n)?;

    let mut streams = RunStreams::new(config.seed, d);
    let mut x = x0.to_vec();
    let mut xsum = vec![0.0; d];
    let mut avg = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut projected = vec![0.0; if projector.is_some() { d } else { 0 }];
    let mut noise = vec![0.0; d];
    let noise_scale = config.g0 * config.sigma;
    let inv_batch = 1.0 / config.batch_size as f64;
    let loss_every = config.loss_spacing();
    let ridge = |x: &[f64]| -> f64 {
        0.5 * config.alpha * x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };

    let mut trace_rows: Vec<f64> = Vec::new();
    let mut trace_steps: Vec<usize> = Vec::new();
    let mut loss_trajectory = Vec::with_capacity(config.steps / loss_every + 1);

    for t in 1..=config.steps {
        avg.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..config.batch_size {
            let i = streams.sample_index(n);
            objective.example_subgradient(&x, i, &mut g);
            if let Some(c) = config.clip {
                clip_to_norm(&mut g, c);
            }
            avg.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi);
        }
        if config.batch_size > 1 {
            avg.iter_mut().for_each(|a| *a *= inv_batch);
        }

        if let Some(every) = config.trace_every {
            if t % every == 0 {
                trace_rows.extend_from_slice(&avg);
                trace_steps.push(t);
            }
        }

        let signal: &[f64] = match projector {
            Some(p) => {
                p.project_into(&avg, &mut projected)?;
                &projected
            }
            None => &avg,
        };

        if noise_scale != 0.0 {
            streams.fill_noise(&mut noise);
        }
        for j in 0..d {
            let step = signal[j] + config.alpha * (x[j] - x0[j]) + noise_scale * noise[j];
            x[j] -= config.eta * step;
            xsum[j] += x[j];
        }

        if t % loss_every == 0 {
            loss_trajectory.push((t, objective.mean_loss(&x) + ridge(&x)));
        }

        observer(&StepView {
            step: t,
            iterate: &x,
            gradient: &avg,
            projected: projector.map(|_| &projected[..]),
        });
    }

    let inv_t = 1.0 / config.steps as f64;
    let xbar: Vec<f64> = xsum.iter().map(|s| s * inv_t).collect();
    let final_empirical_loss = objective.mean_loss(&xbar);
    let trace = match config.trace_every {
        Some(_) if !trace_steps.is_empty() => Some(GradientTrace::from_parts(
            trace_steps.len(),
            d,
            trace_rows,
            trace_steps,
        )?),
        _ => None,
    };

    Ok(RunResult {
        xbar,
        loss_trajectory,
        final_empirical_loss,
        population_loss: None,
        trace,
    })
}

/// The gradient trace recorded by a run configured with `trace_every`.
pub fn collect_gradient_trace(result: &RunResult) -> Result<&GradientTrace> {
    result.trace.as_ref().ok_or(Error::TraceDisabled)
}
