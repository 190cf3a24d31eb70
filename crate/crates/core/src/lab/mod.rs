//! Scenario files, the experiment runner, persistence and reports.

pub mod output;
pub mod plots;
pub mod reports;
pub mod runner;
pub mod scenario;

pub use runner::{run_batch, run_scenario, RunOptions, RunReport};
pub use scenario::Scenario;
