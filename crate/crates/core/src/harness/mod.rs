//! File formats, experiment configs, the experiment runner, and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod format;
pub mod instances;

pub use config::{Algorithm, ExperimentConfig};
pub use experiment::{run_experiment, run_sweep, ExperimentReport, MetricRecord};
pub use format::{ClassFile, Instance, OracleSpec};
