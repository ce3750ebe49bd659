//! Neural secondary voltage controller: network, dataset assembly, offline
//! training, persistence and the runtime controller.

pub mod controller;
pub mod dataset;
pub mod mlp;
pub mod persist;
pub mod train;

use thiserror::Error;

use crate::harness::trace::TraceError;

pub use controller::{AnnController, SETPOINT_MAX, SETPOINT_MIN};
pub use dataset::{build_dataset, Dataset, DatasetOptions, RecordedRun};
pub use mlp::{tansig, Affine, Mlp, Normalization};
pub use persist::ModelBundle;
pub use train::{train, TrainConfig, TrainReport};

/// Smallest dataset [`train`] accepts.
pub const MIN_ROWS: usize = 50;

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset has {rows} rows, need at least {min}")]
    DatasetTooSmall { rows: usize, min: usize },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training config: {0}")]
    Config(String),
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
}
