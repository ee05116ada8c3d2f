//! Experiment harness for the Wasserstein actor-critic engine: TOML
//! configs, seeded runs and sweeps, merged CSVs with 95% intervals, SVG
//! plots and a tabular/closed-form verification suite.

pub mod config;
mod error;
pub mod experiment;
pub mod oracle;
pub mod plot;

pub use config::{ExperimentConfig, GridPoint, SweepSpec, OUTPUT_ROOT_VAR};
pub use error::{HarnessError, Result};
pub use experiment::{
    rerun, run_experiment, run_seed, run_sweep, ExperimentReport, Manifest, SeedSummary, SweepReport,
};
pub use wac_core;
