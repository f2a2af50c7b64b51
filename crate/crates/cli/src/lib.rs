//! Experiment orchestration for lossmesh: configs, result tables, reports and
//! the acceptance checks.

pub mod config;
pub mod experiment;
pub mod report;
pub mod table;
pub mod verify;

pub use config::{load_config, write_config, ExperimentConfig, Mode};
pub use experiment::run_experiment;
pub use report::{compare_report, CompareReport, ToleranceRule};
pub use table::ResultTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("engine error: {0}")]
    Engine(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for engine failures, 3 for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Engine(_) | CliError::Alignment(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<lossmesh_core::Error> for CliError {
    fn from(e: lossmesh_core::Error) -> Self {
        use lossmesh_core::Error as E;
        match e {
            E::Config(_) | E::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Engine(e.to_string()),
        }
    }
}
