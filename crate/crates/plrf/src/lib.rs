//! Experiment tooling on top of `plrf-core`: JSON configs, trajectory and ODE runs, FLOPS
//! sweeps with envelope fits, run manifests and the validation suite behind `plrf validate`.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod manifest;
pub mod run;
pub mod sweep;
pub mod validate;

pub use error::{exit_code, RunError};
