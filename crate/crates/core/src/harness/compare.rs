//! Side-by-side comparison of a baseline run and an ANN run of one scenario.

use serde::Serialize;
use thiserror::Error;

use crate::secondary::References;

use super::metrics::{compute_metrics, Metrics, MetricsError};
use super::trace::Trace;

/// Limit on `|v - v*| / v*` for a run to count as within operating limits, %.
pub const LIMIT_PCT: f64 = 2.0;

/// What must agree between the two runs for a comparison to make sense.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunIdentity {
    pub scenario: String,
    pub seed: u64,
    pub attacks: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct LabeledRun<'a> {
    pub identity: &'a RunIdentity,
    pub trace: &'a Trace,
    pub diverged_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("runs come from different scenarios: {a:?} vs {b:?}")]
    Mismatch { a: RunIdentity, b: RunIdentity },
    #[error("runs have different sample times ({a} vs {b} samples)")]
    TimeGrid { a: usize, b: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// `ann - baseline` for the headline figures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deltas {
    pub post_eps_mean: f64,
    pub post_eps_max: f64,
    pub post_ripple: f64,
    pub max_steady_voltage_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub identity: RunIdentity,
    pub baseline: Metrics,
    pub ann: Metrics,
    pub deltas: Deltas,
    /// ANN post-attack mean `eps_v` strictly below the baseline's.
    pub ann_better_mean_eps_v: bool,
    /// ANN run did not diverge and stayed within 2% in the post-attack window.
    pub ann_within_limits: bool,
    /// ANN post-attack ripple strictly below the baseline's.
    pub ann_smaller_ripple: bool,
}

pub fn compare(baseline: LabeledRun<'_>, ann: LabeledRun<'_>, refs: References, tracked_dg: usize) -> Result<CompareReport, CompareError> {
    if baseline.identity != ann.identity {
        return Err(CompareError::Mismatch { a: baseline.identity.clone(), b: ann.identity.clone() });
    }
    let (a, b) = (baseline.trace.times(), ann.trace.times());
    if a != b && baseline.diverged_at.is_none() && ann.diverged_at.is_none() {
        return Err(CompareError::TimeGrid { a: a.len(), b: b.len() });
    }
    let mb = compute_metrics(baseline.trace, refs, tracked_dg, baseline.diverged_at)?;
    let ma = compute_metrics(ann.trace, refs, tracked_dg, ann.diverged_at)?;
    let deltas = Deltas {
        post_eps_mean: ma.post_eps_mean - mb.post_eps_mean,
        post_eps_max: ma.post_eps_max - mb.post_eps_max,
        post_ripple: ma.post_ripple - mb.post_ripple,
        max_steady_voltage_error_pct: ma.max_steady_voltage_error_pct() - mb.max_steady_voltage_error_pct(),
    };
    Ok(CompareReport {
        identity: baseline.identity.clone(),
        ann_better_mean_eps_v: ma.post_eps_mean < mb.post_eps_mean,
        ann_within_limits: !ma.diverged && ma.post_max_error_pct < LIMIT_PCT,
        ann_smaller_ripple: ma.post_ripple < mb.post_ripple,
        baseline: mb,
        ann: ma,
        deltas,
    })
}
