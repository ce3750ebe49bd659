//! Scenario orchestration: configuration, closed-loop runs, traces, metrics,
//! comparisons and training-data generation.

pub mod compare;
pub mod datagen;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use compare::{compare, CompareReport, LabeledRun, RunIdentity};
pub use metrics::{compute_metrics, Metrics};
pub use scenario::{Scenario, ScenarioConfig, ScenarioError};
pub use sim::{run_scenario, RunError, RunOutcome};
pub use trace::{Trace, TraceRecord};

impl Scenario {
    pub fn identity(&self) -> RunIdentity {
        RunIdentity { scenario: self.config.name.clone(), seed: self.config.seed, attacks: self.attack_labels() }
    }
}
