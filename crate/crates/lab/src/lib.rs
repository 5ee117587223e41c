//! Command-line laboratory for generalized Chaplygin systems.
//!
//! Loads builtin or expression-defined systems from flags or TOML/JSON files and drives the
//! analysis, simulation, verification and reconstruction pipelines of `chaplygin-core`,
//! writing JSON reports and CSV trajectories.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use error::{LabError, Result};
