//! Experiment harness: configs, seed sweeps, result files, tables and plot data.

pub mod config;
pub mod plot;
pub mod records;
pub mod run;
pub mod selftest;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind, Method, Overrides};
pub use records::{ResultRecord, Summary, SCHEMA_VERSION};
pub use run::{run_experiment, RunReport};
