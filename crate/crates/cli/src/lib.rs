//! Scenario-driven front end for the low-rank WaveHoltz solvers: config
//! ingestion, experiment execution and CSV/JSON reporting.

pub mod config;
pub mod report;
pub mod scenario;
pub mod timing;

pub use config::{ConfigError, Mode, ScenarioConfig};
pub use report::{RunReport, Table};
pub use scenario::run_scenario;
pub use timing::run_timing_study;
