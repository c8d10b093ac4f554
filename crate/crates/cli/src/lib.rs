//! Experiment harness: TOML specs, training runs, CSV reports, plots and
//! the property checks behind `bench verify`.

pub mod config;
pub mod harness;
pub mod plot;
pub mod report;
pub mod verify;

pub use config::ExperimentSpec;
pub use harness::{run, RunReport};
