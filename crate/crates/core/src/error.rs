use thiserror::Error;

use crate::ann::AnnError;
use crate::harness::compare::CompareError;
use crate::harness::datagen::DataError;
use crate::harness::metrics::MetricsError;
use crate::harness::trace::TraceError;
use crate::harness::{RunError, ScenarioError};

/// Any failure surfaced by the library's top-level workflows.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ann(#[from] AnnError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}
