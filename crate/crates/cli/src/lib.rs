//! Command-line harness: experiment configs, orchestration, reports and the
//! built-in scenario catalogue.

pub mod config;
mod locate;
pub mod report;
pub mod run;
pub mod scenarios;

pub use config::{load_config, parse_config, ConfigError, Engine, ExperimentConfig};
pub use report::{report, Report, ReportError};
pub use run::{run_experiment, RunError, RunOptions, RunOutput, RunSummary};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const RUNTIME: i32 = 2;
}
