//! Experiment drivers.
//!
//! Every run is a pure function of the spec and its seed, and results are
//! sorted by `(metric, d, seed)` before anything is written, so the CSV bytes
//! never depend on scheduling. Runs are spread over a rayon pool whose size is
//! read from [`WORKERS_ENV`].

use std::io::Write;
use std::path::{Path, PathBuf};

use dpsco_core::rng::derive_seed;
use dpsco_core::{
    build_projector_from_report, calibrate_sigma, decay_rate_bound, dpsgd_run,
    estimate_population_loss, generate_shifted_gaussian_data, optimal_k, orthogonal_iteration_svd,
    theorem_params, BoundTerms, DiagonalMetric, MedianDataset, MetricKind, PrivacyBudget,
    SgdConfig, SpectralReport, Split, DEFAULT_C1, DEFAULT_C2,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_sig9;

/// Environment variable holding the worker count (defaults to all cores).
pub const WORKERS_ENV: &str = "DPSCO_WORKERS";

const TAG_TRAIN: u64 = 1;
const TAG_TEST: u64 = 2;
const TAG_VALIDATION: u64 = 3;
const TAG_RUN: u64 = 4;
const TAG_TRACE: u64 = 5;
const TAG_PCA: u64 = 6;

pub const SWEEP_HEADER: [&str; 13] = [
    "metric", "d", "seed", "T", "eta", "alpha", "sigma", "emp_loss", "pop_loss", "emp_mean",
    "emp_std", "pop_mean", "pop_std",
];

pub const RETRAIN_HEADER: [&str; 13] = [
    "metric",
    "d",
    "seed",
    "k",
    "T",
    "eta",
    "alpha",
    "sigma",
    "emp_loss",
    "pop_loss",
    "baseline_emp_loss",
    "baseline_pop_loss",
    "emp_rel_change",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// A hyperparameter given either explicitly or as `"auto"` (theorem formula).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting<T> {
    Auto(Auto),
    Value(T),
}

impl<T: Copy> Setting<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Setting::Value(v) => Some(v),
            Setting::Auto(_) => None,
        }
    }

    pub fn is_auto(self) -> bool {
        matches!(self, Setting::Auto(_))
    }
}

/// Optimizer settings shared by every run of an experiment.
///
/// `σ` is calibrated from the budget unless overridden; `g0` defaults to the
/// metric's Lipschitz constant. `k` and `diameter` only matter for `"auto"`
/// entries and default to `min(d_min, d)` and `√(2 d_min)` (the expected
/// distance from the origin to a generated record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdTemplate {
    pub steps: Setting<usize>,
    pub eta: Setting<f64>,
    pub alpha: Setting<f64>,
    pub batch_size: usize,
    pub clip: Option<f64>,
    pub g0: Option<f64>,
    pub sigma: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub k: Option<usize>,
    pub diameter: Option<f64>,
    /// Every coordinate of the starting point.
    pub x0: f64,
    pub loss_every: Option<usize>,
}

impl Default for SgdTemplate {
    fn default() -> Self {
        Self {
            steps: Setting::Value(20_000),
            eta: Setting::Value(6.2e-4),
            alpha: Setting::Value(0.0),
            batch_size: 1,
            clip: None,
            g0: None,
            sigma: None,
            c1: DEFAULT_C1,
            c2: DEFAULT_C2,
            k: None,
            diameter: None,
            x0: 0.0,
            loss_every: None,
        }
    }
}

/// One-dimensional learning-rate search on a separately generated
/// validation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaGrid {
    pub values: Vec<f64>,
    #[serde(default)]
    pub n_validation: Option<usize>,
}

/// Settings of the trace → PCA → retrain pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainOptions {
    /// The trace run lasts this many times the template's `T`.
    pub trace_factor: usize,
    /// Target number of trace rows.
    pub trace_rows: usize,
    pub iters: usize,
}

impl Default for RetrainOptions {
    fn default() -> Self {
        Self {
            trace_factor: 10,
            trace_rows: 2000,
            iters: dpsco_core::spectral::DEFAULT_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub dims: Vec<usize>,
    /// `const`, `sqrt`, `linear` or `custom` (needs `metric_file`).
    pub metrics: Vec<String>,
    pub metric_file: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub d_min: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub sgd: SgdTemplate,
    pub eta_grid: Option<EtaGrid>,
    pub retrain: RetrainOptions,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            dims: vec![10, 100, 1000],
            metrics: vec!["const".into(), "sqrt".into(), "linear".into()],
            metric_file: None,
            seeds: (0..5).collect(),
            n_train: 2000,
            n_test: 2000,
            d_min: 10,
            epsilon: 2.0,
            delta: 1e-6,
            sgd: SgdTemplate::default(),
            eta_grid: None,
            retrain: RetrainOptions::default(),
        }
    }
}

impl SweepSpec {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads a spec; a relative `metric_file` is resolved against the
    /// spec's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut spec = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(f) = &spec.metric_file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    spec.metric_file = Some(dir.join(f));
                }
            }
        }
        Ok(spec)
    }

    pub fn budget(&self) -> Result<PrivacyBudget> {
        Ok(PrivacyBudget::new(self.epsilon, self.delta)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dims.is_empty() || self.metrics.is_empty() || self.seeds.is_empty() {
            return bad("dims, metrics and seeds must be non-empty".into());
        }
        if self.d_min == 0 {
            return bad("d_min must be at least 1".into());
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < self.d_min) {
            return bad(format!("dimension {d} is below d_min = {}", self.d_min));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds must be distinct".into());
        }
        for m in &self.metrics {
            let kind: MetricKind = m.parse().map_err(|e: dpsco_core::Error| Error::Config(e.to_string()))?;
            if kind == MetricKind::Custom && self.metric_file.is_none() {
                return bad("metric \"custom\" needs metric_file".into());
            }
        }
        if self.n_train < 10 || self.n_test == 0 {
            return bad("need n_train >= 10 and n_test >= 1".into());
        }
        if self.sgd.batch_size == 0 || self.sgd.batch_size > self.n_train {
            return bad(format!("batch_size must lie in [1, {}]", self.n_train));
        }
        if let Some(grid) = &self.eta_grid {
            if grid.values.is_empty() || grid.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad("eta_grid.values must be non-empty and positive".into());
            }
            if grid.n_validation == Some(0) {
                return bad("eta_grid.n_validation must be positive".into());
            }
        }
        if self.retrain.trace_factor == 0 || self.retrain.trace_rows == 0 || self.retrain.iters == 0 {
            return bad("retrain options must be positive".into());
        }
        self.budget()?;
        Ok(())
    }

    /// The metric named `name` in dimension `d`.
    pub fn metric(&self, name: &str, d: usize) -> Result<DiagonalMetric> {
        let kind: MetricKind = name.parse()?;
        if kind != MetricKind::Custom {
            return Ok(DiagonalMetric::new(kind, d)?);
        }
        let path = self
            .metric_file
            .as_deref()
            .ok_or_else(|| Error::Config("metric \"custom\" needs metric_file".into()))?;
        let m = crate::io::read_metric_file(path)?;
        if m.dim() != d {
            return Err(Error::Config(format!(
                "metric file has {} entries but the run uses d = {d}",
                m.dim()
            )));
        }
        Ok(m)
    }

    fn data(&self, n: usize, d: usize, seed: u64, tag: u64, split: Split) -> Result<MedianDataset> {
        Ok(generate_shifted_gaussian_data(n, d, self.d_min, derive_seed(seed, tag))?.with_split(split))
    }

    /// The training or test set a run with this seed uses in dimension `d`.
    pub fn dataset(&self, split: Split, d: usize, seed: u64) -> Result<MedianDataset> {
        match split {
            Split::Train => self.data(self.n_train, d, seed, TAG_TRAIN, split),
            Split::Test => self.data(self.n_test, d, seed, TAG_TEST, split),
        }
    }

    /// The concrete optimizer configuration for one run.
    pub fn resolve(&self, metric: &DiagonalMetric, seed: u64) -> Result<SgdConfig> {
        let t = &self.sgd;
        let d = metric.dim();
        let n = self.n_train;
        let budget = self.budget()?;
        let g0 = t.g0.unwrap_or_else(|| metric.lipschitz());
        let k = t.k.unwrap_or(self.d_min.min(d));
        let diameter = t.diameter.unwrap_or((2.0 * self.d_min as f64).sqrt());

        let theorem = if t.steps.is_auto() || t.eta.is_auto() || t.alpha.is_auto() {
            let coeffs = metric.restricted_coeffs();
            Some(theorem_params(k, d, n, diameter, &coeffs, &budget, t.c1, t.c2)?)
        } else {
            None
        };
        let steps = match (t.steps.value(), &theorem) {
            (Some(v), _) => v,
            (None, Some(p)) => p.steps,
            (None, None) => unreachable!(),
        };
        let sigma = match t.sigma {
            Some(s) => s,
            None => calibrate_sigma(steps, n, &budget, t.c2)?,
        };
        let eta = match t.eta.value() {
            Some(v) => v,
            None => {
                if g0 * sigma == 0.0 {
                    return Err(Error::Config("eta = \"auto\" needs a positive noise scale".into()));
                }
                diameter / (g0 * sigma * ((steps * k) as f64).sqrt())
            }
        };
        let alpha = match (t.alpha.value(), &theorem) {
            (Some(v), _) => v,
            (None, Some(p)) => p.alpha,
            (None, None) => unreachable!(),
        };
        if t.eta.is_auto() && t.alpha.is_auto() && eta * alpha > 0.5 {
            let product = eta * alpha;
            return Err(dpsco_core::Error::StepRegularizerProduct {
                product,
                c2: t.c2,
                suggested_c2: (t.c2 * product / 0.5 * 1.0001).ceil(),
            }
            .into());
        }
        let config = SgdConfig {
            steps,
            eta,
            alpha,
            sigma,
            g0,
            batch_size: t.batch_size,
            clip: t.clip,
            seed: derive_seed(seed, TAG_RUN),
            trace_every: None,
            loss_every: t.loss_every,
        };
        config.validate(n)?;
        Ok(config)
    }
}

/// A rayon pool sized by [`WORKERS_ENV`].
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub metric: String,
    pub d: usize,
    pub seed: u64,
    pub steps: usize,
    pub eta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub emp_loss: f64,
    pub pop_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub metric: String,
    pub d: usize,
    pub steps: usize,
    pub eta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub emp_mean: f64,
    /// Sample standard deviation (`n − 1`); NaN for a single seed.
    pub emp_std: f64,
    pub pop_mean: f64,
    pub pop_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepOutput {
    pub fn aggregate(&self, metric: &str, d: usize) -> Option<&AggregateRecord> {
        self.aggregates.iter().find(|a| a.metric == metric && a.d == d)
    }

    /// Run rows of each `(metric, d)` group followed by its `AGG` row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(SWEEP_HEADER)?;
        for agg in &self.aggregates {
            for r in self.runs.iter().filter(|r| r.metric == agg.metric && r.d == agg.d) {
                w.write_record([
                    r.metric.clone(),
                    r.d.to_string(),
                    r.seed.to_string(),
                    r.steps.to_string(),
                    fmt_sig9(r.eta),
                    fmt_sig9(r.alpha),
                    fmt_sig9(r.sigma),
                    fmt_sig9(r.emp_loss),
                    fmt_sig9(r.pop_loss),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?;
            }
            w.write_record([
                agg.metric.clone(),
                agg.d.to_string(),
                "AGG".into(),
                agg.steps.to_string(),
                fmt_sig9(agg.eta),
                fmt_sig9(agg.alpha),
                fmt_sig9(agg.sigma),
                String::new(),
                String::new(),
                fmt_sig9(agg.emp_mean),
                fmt_sig9(agg.emp_std),
                fmt_sig9(agg.pop_mean),
                fmt_sig9(agg.pop_std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
    }
}

struct Task {
    metric_idx: usize,
    d: usize,
    seed: u64,
    eta: Option<f64>,
}

struct TaskResult {
    record: RunRecord,
    validation: Option<f64>,
}

fn run_task(spec: &SweepSpec, task: &Task, n_validation: Option<usize>) -> Result<TaskResult> {
    let name = &spec.metrics[task.metric_idx];
    let attach = |source: dpsco_core::Error| Error::Run {
        metric: name.clone(),
        d: task.d,
        seed: task.seed,
        source,
    };
    let lift = |e: Error| match e {
        Error::Core(c) => attach(c),
        other => other,
    };
    let metric = spec.metric(name, task.d)?;
    let mut config = spec.resolve(&metric, task.seed).map_err(lift)?;
    if let Some(eta) = task.eta {
        config.eta = eta;
    }
    let train = spec.data(spec.n_train, task.d, task.seed, TAG_TRAIN, Split::Train).map_err(lift)?;
    let test = spec.data(spec.n_test, task.d, task.seed, TAG_TEST, Split::Test).map_err(lift)?;
    let x0 = vec![spec.sgd.x0; task.d];
    let run = dpsgd_run(&config, &train, &metric, &x0, None).map_err(attach)?;
    let pop_loss = estimate_population_loss(&run.xbar, &test, &metric).map_err(attach)?;
    let validation = match n_validation {
        Some(nv) => {
            let val = spec.data(nv, task.d, task.seed, TAG_VALIDATION, Split::Test).map_err(lift)?;
            Some(estimate_population_loss(&run.xbar, &val, &metric).map_err(attach)?)
        }
        None => None,
    };
    Ok(TaskResult {
        record: RunRecord {
            metric: name.clone(),
            d: task.d,
            seed: task.seed,
            steps: config.steps,
            eta: config.eta,
            alpha: config.alpha,
            sigma: config.sigma,
            emp_loss: run.final_empirical_loss,
            pop_loss,
        },
        validation,
    })
}

/// Runs every `(metric, d, seed)` combination of the spec.
///
/// With an `eta_grid`, every grid value is run and each `(metric, d)` group
/// keeps the value with the lowest mean validation loss (ties go to the
/// earlier value).
pub fn run_dimension_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let pool = worker_pool()?;
    let mut dims = spec.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();

    let etas: Vec<Option<f64>> = match &spec.eta_grid {
        Some(g) => g.values.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let n_validation = spec
        .eta_grid
        .as_ref()
        .map(|g| g.n_validation.unwrap_or(spec.n_test));

    let mut tasks = Vec::new();
    for metric_idx in 0..spec.metrics.len() {
        for &d in &dims {
            for &eta in &etas {
                for &seed in &seeds {
                    tasks.push(Task { metric_idx, d, seed, eta });
                }
            }
        }
    }
    let results: Vec<TaskResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_task(spec, t, n_validation))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut runs = Vec::new();
    let mut aggregates = Vec::new();
    let group = seeds.len();
    for block in results.chunks(group * etas.len()) {
        let chosen = block
            .chunks(group)
            .map(|c| {
                let v: Vec<f64> = c.iter().filter_map(|r| r.validation).collect();
                if v.is_empty() {
                    0.0
                } else {
                    mean_std(&v).0
                }
            })
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
            .0;
        let picked: Vec<RunRecord> = block[chosen * group..(chosen + 1) * group]
            .iter()
            .map(|r| r.record.clone())
            .collect();
        let emp: Vec<f64> = picked.iter().map(|r| r.emp_loss).collect();
        let pop: Vec<f64> = picked.iter().map(|r| r.pop_loss).collect();
        let (emp_mean, emp_std) = mean_std(&emp);
        let (pop_mean, pop_std) = mean_std(&pop);
        let first = &picked[0];
        aggregates.push(AggregateRecord {
            metric: first.metric.clone(),
            d: first.d,
            steps: first.steps,
            eta: first.eta,
            alpha: first.alpha,
            sigma: first.sigma,
            emp_mean,
            emp_std,
            pop_mean,
            pop_std,
        });
        runs.extend(picked);
    }
    Ok(SweepOutput { runs, aggregates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainRow {
    pub metric: String,
    pub d: usize,
    pub seed: u64,
    pub k: usize,
    pub steps: usize,
    pub eta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub emp_loss: f64,
    pub pop_loss: f64,
    pub baseline_emp_loss: f64,
    pub baseline_pop_loss: f64,
}

impl RetrainRow {
    /// `(emp_loss − baseline) / baseline`
    pub fn emp_rel_change(&self) -> f64 {
        (self.emp_loss - self.baseline_emp_loss) / self.baseline_emp_loss
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrainOutput {
    pub rows: Vec<RetrainRow>,
    /// Spectrum of each seed's trace, in seed order.
    pub spectra: Vec<(u64, SpectralReport)>,
    /// `(rows, cols)` of the traces.
    pub trace_shape: (usize, usize),
}

impl RetrainOutput {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RETRAIN_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                r.d.to_string(),
                r.seed.to_string(),
                r.k.to_string(),
                r.steps.to_string(),
                fmt_sig9(r.eta),
                fmt_sig9(r.alpha),
                fmt_sig9(r.sigma),
                fmt_sig9(r.emp_loss),
                fmt_sig9(r.pop_loss),
                fmt_sig9(r.baseline_emp_loss),
                fmt_sig9(r.baseline_pop_loss),
                fmt_sig9(r.emp_rel_change()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `seed,rank,singular_value` for every trace spectrum.
    pub fn write_spectra_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["seed", "rank", "singular_value"])?;
        for (seed, report) in &self.spectra {
            for (i, s) in report.singular_values.iter().enumerate() {
                w.write_record([seed.to_string(), (i + 1).to_string(), fmt_sig9(*s)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean over seeds of the projected empirical loss at `k`.
    pub fn mean_emp_loss(&self, k: usize) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.k == k).map(|r| r.emp_loss).collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    /// Mean over seeds of the unprojected empirical loss.
    pub fn mean_baseline_emp_loss(&self) -> Option<f64> {
        let mut seen = Vec::new();
        let mut v = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.seed) {
                seen.push(r.seed);
                v.push(r.baseline_emp_loss);
            }
        }
        (!v.is_empty()).then(|| mean_std(&v).0)
    }
}

struct SeedPhase {
    seed: u64,
    train: MedianDataset,
    test: MedianDataset,
    config: SgdConfig,
    baseline: (f64, f64),
    report: SpectralReport,
}

/// Trace collection, principal components and projected retraining for the
/// single `(metric, d)` of the spec, once per seed.
///
/// The trace run lasts `trace_factor × T` steps (with `σ` recalibrated for
/// that length unless fixed) and records about `trace_rows` gradients. Each
/// projected rerun starts from `x0` with the same seed as the unprojected
/// baseline, so the two differ only in the projection of the signal.
pub fn run_trace_retrain(spec: &SweepSpec, k_list: &[usize]) -> Result<RetrainOutput> {
    spec.validate()?;
    if spec.metrics.len() != 1 || spec.dims.len() != 1 {
        return Err(Error::Config("retraining needs exactly one metric and one dimension".into()));
    }
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::Config("k values must be positive".into()));
    }
    let name = spec.metrics[0].clone();
    let d = spec.dims[0];
    let metric = spec.metric(&name, d)?;
    let pool = worker_pool()?;
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    let k_max = *k_list.iter().max().unwrap();
    let opts = &spec.retrain;
    let x0 = vec![spec.sgd.x0; d];

    let attach = |seed: u64| {
        let name = name.clone();
        move |source: dpsco_core::Error| Error::Run {
            metric: name.clone(),
            d,
            seed,
            source,
        }
    };

    let phases: Vec<SeedPhase> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| -> Result<SeedPhase> {
                let config = spec.resolve(&metric, seed)?;
                let train = spec.data(spec.n_train, d, seed, TAG_TRAIN, Split::Train)?;
                let test = spec.data(spec.n_test, d, seed, TAG_TEST, Split::Test)?;
                let base = dpsgd_run(&config, &train, &metric, &x0, None).map_err(attach(seed))?;
                let base_pop = estimate_population_loss(&base.xbar, &test, &metric)?;

                let mut long = spec.clone();
                long.sgd.steps = Setting::Value(config.steps * opts.trace_factor);
                let mut trace_cfg = long.resolve(&metric, seed)?;
                trace_cfg.seed = derive_seed(seed, TAG_TRACE);
                trace_cfg.trace_every = Some((trace_cfg.steps / opts.trace_rows).max(1));
                trace_cfg.loss_every = Some(trace_cfg.steps);
                let traced = dpsgd_run(&trace_cfg, &train, &metric, &x0, None).map_err(attach(seed))?;
                let trace = dpsco_core::collect_gradient_trace(&traced)?;
                let width = trace.rows().min(trace.cols());
                if k_max > width {
                    return Err(Error::Config(format!(
                        "k = {k_max} exceeds the trace rank bound {width}"
                    )));
                }
                let report = orthogonal_iteration_svd(trace, k_max, opts.iters, derive_seed(seed, TAG_PCA))
                    .map_err(attach(seed))?;
                Ok(SeedPhase {
                    seed,
                    train,
                    test,
                    config,
                    baseline: (base.final_empirical_loss, base_pop),
                    report,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let trace_shape = {
        let steps = phases[0].config.steps * opts.trace_factor;
        let every = (steps / opts.trace_rows).max(1);
        (steps / every, d)
    };

    let jobs: Vec<(usize, usize)> = (0..phases.len())
        .flat_map(|p| k_list.iter().map(move |&k| (p, k)))
        .collect();
    let rows: Vec<RetrainRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, k)| -> Result<RetrainRow> {
                let ph = &phases[p];
                let proj = build_projector_from_report(&ph.report, k)?;
                let run = dpsgd_run(&ph.config, &ph.train, &metric, &x0, Some(&proj))
                    .map_err(attach(ph.seed))?;
                let pop = estimate_population_loss(&run.xbar, &ph.test, &metric)?;
                Ok(RetrainRow {
                    metric: name.clone(),
                    d,
                    seed: ph.seed,
                    k,
                    steps: ph.config.steps,
                    eta: ph.config.eta,
                    alpha: ph.config.alpha,
                    sigma: ph.config.sigma,
                    emp_loss: run.final_empirical_loss,
                    pop_loss: pop,
                    baseline_emp_loss: ph.baseline.0,
                    baseline_pop_loss: ph.baseline.1,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let spectra = phases.into_iter().map(|p| (p.seed, p.report)).collect();
    Ok(RetrainOutput {
        rows,
        spectra,
        trace_shape,
    })
}

/// One line of [`tabulate_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub metric: String,
    pub d: usize,
    pub c: f64,
    pub k: usize,
    pub erm: f64,
    pub sco: f64,
    pub decay_rate: f64,
}

pub const BOUND_TABLE_HEADER: [&str; 7] = ["metric", "d", "c", "optimal_k", "erm_bound", "sco_bound", "decay_rate_bound"];

/// Bound values (up to constants) at the decay-optimal split for every
/// metric, dimension and decay exponent `c > 1/2`.
pub fn tabulate_bounds(spec: &SweepSpec, c_values: &[f64]) -> Result<Vec<BoundRow>> {
    spec.validate()?;
    let budget = spec.budget()?;
    let n = spec.n_train;
    let diameter = spec.sgd.diameter.unwrap_or((2.0 * spec.d_min as f64).sqrt());
    let mut dims = spec.dims.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut rows = Vec::new();
    for name in &spec.metrics {
        for &d in &dims {
            let metric = spec.metric(name, d)?;
            let coeffs = metric.restricted_coeffs();
            let g0 = metric.lipschitz();
            for &c in c_values {
                let k = optimal_k(d, n, &budget, c)?;
                let terms = BoundTerms::compute(k, d, n, diameter, &coeffs, budget.epsilon(), budget.delta(), g0)?;
                rows.push(BoundRow {
                    metric: name.clone(),
                    d,
                    c,
                    k,
                    erm: terms.erm(),
                    sco: terms.sco(),
                    decay_rate: decay_rate_bound(c, n, &budget, g0, diameter)?,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_bound_table<W: Write>(writer: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BOUND_TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.d.to_string(),
            fmt_sig9(r.c),
            r.k.to_string(),
            fmt_sig9(r.erm),
            fmt_sig9(r.sco),
            fmt_sig9(r.decay_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of the per-`k` bound table printed by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub k: usize,
    pub erm: f64,
    pub sco: f64,
    pub steps: usize,
    pub sigma: f64,
    pub eta: f64,
    pub alpha: f64,
}

/// Bounds and theorem parameters for each split `k` of one metric.
pub fn split_table(
    metric: &DiagonalMetric,
    n: usize,
    budget: &PrivacyBudget,
    diameter: f64,
    ks: &[usize],
    c1: f64,
    c2: f64,
) -> Result<Vec<SplitRow>> {
    let d = metric.dim();
    let coeffs = metric.restricted_coeffs();
    let g0 = metric.lipschitz();
    ks.iter()
        .map(|&k| {
            let terms = BoundTerms::compute(k, d, n, diameter, &coeffs, budget.epsilon(), budget.delta(), g0)?;
            let p = theorem_params(k, d, n, diameter, &coeffs, budget, c1, c2)?;
            Ok(SplitRow {
                k,
                erm: terms.erm(),
                sco: terms.sco(),
                steps: p.steps,
                sigma: p.sigma,
                eta: p.eta,
                alpha: p.alpha,
            })
        })
        .collect()
}
