//! Experiment harness, file formats and command-line front end for
//! [`dpsco_core`].
//!
//! - [`harness`]: dimension sweeps, trace → PCA → projected retraining, and
//!   bound tables, all with byte-deterministic CSV output.
//! - [`io`]: dataset, metric and gradient-trace files.
//! - [`format`]: float formatting used by every CSV writer.

#![deny(missing_debug_implementations)]

pub mod error;
pub mod format;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
pub use format::fmt_sig9;
