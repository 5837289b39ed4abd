//! Scenario runner for the torus interpolation library.

pub mod pipelines;
pub mod runner;
pub mod scenario;

pub use runner::{run, RunOptions, RunResult};
