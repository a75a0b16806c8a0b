//! Experiment driver for the `gcp` crate: special-function queries, ODE
//! simulations, single training and evaluation runs, and cross-validated
//! experiments with canonical JSON reports.

pub mod app;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;
pub mod simulate;

pub use error::{CliError, CliResult};
