//! Experiment runner for the continuous-priority M/M/c queue.
//!
//! [`run_experiment`] simulates a configured system for a number of
//! replications, estimates `m`, `s` and `w` per replication and pooled, samples
//! the closed forms, and writes everything as CSV plus a JSON summary.

pub mod compare;
pub mod config;
mod error;
pub mod experiment;
pub mod io;

pub use compare::{compare_curves, BinComparison, ComparisonReport};
pub use config::{ExperimentConfig, Preset};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentSummary};
