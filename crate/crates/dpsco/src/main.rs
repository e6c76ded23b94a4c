use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dpsco::format::fmt_sig9;
use dpsco::harness::{self, SweepSpec};
use dpsco::io::{read_metric_file, read_trace_file};
use dpsco_core::spectral::{fit_spectrum, DEFAULT_ITERS};
use dpsco_core::{
    optimal_k, orthogonal_iteration_svd, DiagonalMetric, MetricKind, PrivacyBudget, DEFAULT_C1,
    DEFAULT_C2,
};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "dpsco", version, about = "Private convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Loss versus dimension for each metric, with per-run and aggregate rows.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient trace, principal components, and projected reruns.
    Retrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 100])]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the trace spectra (`seed,rank,singular_value`).
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Singular values and power-law fit of a gradient trace file.
    Spectral {
        trace: PathBuf,
        /// Number of singular values [default: min(rows, cols, 1000)].
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = 1)]
        fit_lo: usize,
        /// [default: min(1000, k)]
        #[arg(long)]
        fit_hi: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Refit at 10, 50 and 100 iterations and report the slope spread.
        #[arg(long)]
        robustness: bool,
        /// CSV destination [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary destination [default: stdout when --out is given, else stderr].
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Excess-risk bounds and theorem parameters, up to constants.
    Bound {
        #[arg(long, value_delimiter = ',', conflicts_with = "auto_k")]
        k: Vec<usize>,
        /// Use the split that balances a `k^-c` coefficient decay.
        #[arg(long)]
        auto_k: bool,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value = "linear")]
        metric: MetricKind,
        #[arg(long)]
        metric_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        diameter: f64,
        #[arg(long, default_value_t = DEFAULT_C1)]
        c1: f64,
        #[arg(long, default_value_t = DEFAULT_C2)]
        c2: f64,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config, out } => {
            let spec = SweepSpec::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let result = harness::run_dimension_sweep(&spec)?;
            let mut w = output(out.as_deref())?;
            result.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Retrain {
            config,
            k,
            out,
            spectrum,
        } => {
            let spec = SweepSpec::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let result = harness::run_trace_retrain(&spec, &k)?;
            let mut w = output(out.as_deref())?;
            result.write_csv(&mut w)?;
            w.flush()?;
            if let Some(p) = spectrum {
                let mut w = output(Some(&p))?;
                result.write_spectra_csv(&mut w)?;
                w.flush()?;
            }
        }
        Command::Spectral {
            trace,
            k,
            iters,
            fit_lo,
            fit_hi,
            seed,
            robustness,
            out,
            summary,
        } => {
            let h = read_trace_file(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let k = k.unwrap_or(h.rows().min(h.cols()).min(1000));
            let fit_hi = fit_hi.unwrap_or(k.min(1000));
            let iter_list: Vec<usize> = if robustness { vec![10, 50, 100] } else { vec![iters] };
            let mut fits = Vec::new();
            let mut first = None;
            for &it in &iter_list {
                let report = orthogonal_iteration_svd(&h, k, it, seed)?;
                let fit = fit_spectrum(&report.singular_values, fit_lo, fit_hi)?;
                fits.push(json!({
                    "iters": it,
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r2": fit.r2,
                    "fit_lo": fit.lo,
                    "fit_hi": fit.hi,
                }));
                first.get_or_insert(report);
            }
            let report = first.expect("at least one iteration count");

            let mut w = output(out.as_deref())?;
            writeln!(w, "rank,singular_value")?;
            for (i, s) in report.singular_values.iter().enumerate() {
                writeln!(w, "{},{}", i + 1, fmt_sig9(*s))?;
            }
            w.flush()?;

            let doc = if robustness {
                let slopes: Vec<f64> = fits.iter().map(|f| f["slope"].as_f64().unwrap()).collect();
                let spread = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - slopes.iter().cloned().fold(f64::INFINITY, f64::min);
                json!({ "fits": fits, "slope_spread": spread })
            } else {
                fits.into_iter().next().unwrap()
            };
            let text = serde_json::to_string_pretty(&doc)?;
            match (summary, out.is_some()) {
                (Some(p), _) => std::fs::write(&p, text + "\n")?,
                (None, true) => println!("{text}"),
                (None, false) => eprintln!("{text}"),
            }
        }
        Command::Bound {
            k,
            auto_k,
            c,
            epsilon,
            delta,
            n,
            d,
            metric,
            metric_file,
            diameter,
            c1,
            c2,
        } => {
            let budget = PrivacyBudget::new(epsilon, delta)?;
            let m = match (&metric_file, metric) {
                (Some(p), _) => read_metric_file(p)?,
                (None, MetricKind::Custom) => bail!("--metric custom needs --metric-file"),
                (None, kind) => {
                    let Some(d) = d else { bail!("--d is required unless --metric-file is given") };
                    DiagonalMetric::new(kind, d)?
                }
            };
            if let (Some(d), Some(_)) = (d, &metric_file) {
                if d != m.dim() {
                    bail!("--d {d} disagrees with the {} entries of the metric file", m.dim());
                }
            }
            let ks = if auto_k {
                vec![optimal_k(m.dim(), n, &budget, c)?]
            } else if k.is_empty() {
                bail!("give --k or --auto-k")
            } else {
                k
            };
            let rows = harness::split_table(&m, n, &budget, diameter, &ks, c1, c2)?;
            let mut out = io::stdout().lock();
            writeln!(
                out,
                "# bounds up to constants: metric={} d={} n={n} epsilon={} delta={} D={}",
                m.kind(),
                m.dim(),
                fmt_sig9(epsilon),
                fmt_sig9(delta),
                fmt_sig9(diameter)
            )?;
            writeln!(out, "k,erm_bound,sco_bound,T,sigma,eta,alpha")?;
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.k,
                    fmt_sig9(r.erm),
                    fmt_sig9(r.sco),
                    r.steps,
                    fmt_sig9(r.sigma),
                    fmt_sig9(r.eta),
                    fmt_sig9(r.alpha)
                )?;
            }
        }
    }
    Ok(())
}
