//! Experiment orchestration and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod report;

pub use config::{DataSource, ExperimentConfig, FeatureFiles, Seeds, SyntheticData};
pub use experiment::{run_experiment, ExperimentResult, MethodReport, MethodSummary, StateReport};
