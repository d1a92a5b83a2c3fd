//! Benchmark harness: scenario files, the scenario driver, event-log audit
//! and report formatting. File and process handling lives in the CLI.

pub mod audit;
pub mod fuzz;
pub mod report;
pub mod runner;
pub mod scenario;

use thiserror::Error;

use crate::orchestrator::OrchestratorError;
use crate::registry::RegistryError;

pub use audit::{audit, AuditReport, Violation};
pub use fuzz::{scaling_fuzz, FuzzOutcome};
pub use runner::{compare_modes, default_comparison, deploy, run_scenario, AllocationSample, MetricsReport, ScenarioRun, Stat};
pub use scenario::{Action, Mode, ScenarioConfig, Schedule, ScheduledAction};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("bad scenario: {0}")]
    Config(String),
    #[error("scenario failed: {0}")]
    Scenario(#[from] OrchestratorError),
}

impl From<RegistryError> for BenchError {
    fn from(e: RegistryError) -> Self {
        BenchError::Scenario(e.into())
    }
}
