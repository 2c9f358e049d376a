//! Experiment orchestration for inviscid-limit rate studies: configuration,
//! viscosity sweeps, exponent fits, invariant suites and reports.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod report;
pub mod suites;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RateRow, RateSeries};
pub use fit::{fit_rate, FitOptions, RateFit};
pub use report::emit_report;
