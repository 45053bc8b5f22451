//! Experiment kit: run configuration, record registry, sweeps, reports and the CLI.

pub mod cli;
pub mod config;
pub mod error;
pub mod records;
pub mod report;
pub mod svg;
pub mod sweep;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use records::ExperimentRecord;
