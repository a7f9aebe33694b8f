//! Experiment orchestration for the `paretoflow` command.

pub mod config;
pub mod experiments;
