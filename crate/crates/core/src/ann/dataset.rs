//! Training rows for a DG's neural voltage controller, assembled from recorded runs.
//!
//! For DG `i` with in-neighbors `j1 < j2 < ...`, a row is
//! `x = [v_ii, v_ij1, v_ij2, ..., v^_ii, v^_ij1, v^_ij2, ..., v*]` (clean values,
//! received values, reference) and `y` is DG `i`'s voltage set-point at the same
//! instant in the matching attack-free run.

use crate::attack::{ChannelId, Signal, Source};
use crate::harness::trace::{Trace, TraceError};

use super::AnnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub run: String,
    pub t: f64,
    pub attacked: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub x: Vec<f64>,
    pub y: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.rows.first().map(|r| r.x.len())
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64, provenance: Provenance) {
        self.rows.push(Row { x, y, provenance });
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    /// Checks finiteness, a consistent width, and that both normal and attacked rows are present.
    pub fn check_trainable(&self) -> Result<(), AnnError> {
        let w = self.width().ok_or(AnnError::DatasetTooSmall { rows: 0, min: super::MIN_ROWS })?;
        for (k, r) in self.rows.iter().enumerate() {
            if r.x.len() != w {
                return Err(AnnError::Shape(format!("row {k} has {} features, expected {w}", r.x.len())));
            }
            if !r.y.is_finite() || r.x.iter().any(|v| !v.is_finite()) {
                return Err(AnnError::NonFinite(format!("row {k} ({} t={})", r.provenance.run, r.provenance.t)));
            }
        }
        if !self.rows.iter().any(|r| !r.provenance.attacked) {
            return Err(AnnError::Dataset("no rows from a normal run".into()));
        }
        if !self.rows.iter().any(|r| r.provenance.attacked) {
            return Err(AnnError::Dataset("no rows from an attacked run".into()));
        }
        Ok(())
    }
}

/// One recorded run plus the attack-free run supplying its targets.
/// For a normal run `clean` is the run itself.
#[derive(Debug, Clone, Copy)]
pub struct RecordedRun<'a> {
    pub id: &'a str,
    pub trace: &'a Trace,
    pub clean: &'a Trace,
    pub attacked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    /// Samples with `t` below this are dropped.
    pub discard_before: f64,
    /// For attacked runs, add a `[received, received, v*]` row for every
    /// attack-active sample, matching what the controller sees at run time.
    pub duplicate_received: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { discard_before: 0.1, duplicate_received: true }
    }
}

/// Voltage channel indices feeding DG `dg`: own measurement first, then in-neighbors ascending.
pub fn feature_channels(trace: &Trace, dg: usize) -> Result<Vec<usize>, AnnError> {
    let own = ChannelId { src: Source::Dg(dg), dst: dg, signal: Signal::Voltage };
    let own_idx = trace
        .layout
        .channel_index(&own)
        .ok_or_else(|| TraceError::MissingSignal(format!("ch.{own}")))?;
    let mut nbrs: Vec<(usize, usize)> = trace
        .layout
        .channels
        .iter()
        .enumerate()
        .filter_map(|(k, c)| match c.src {
            Source::Dg(j) if c.dst == dg && j != dg && c.signal == Signal::Voltage => Some((j, k)),
            _ => None,
        })
        .collect();
    nbrs.sort();
    let mut idx = vec![own_idx];
    idx.extend(nbrs.into_iter().map(|(_, k)| k));
    Ok(idx)
}

pub fn build_dataset(
    runs: &[RecordedRun<'_>],
    dg: usize,
    v_ref: f64,
    opts: DatasetOptions,
) -> Result<Dataset, AnnError> {
    let mut ds = Dataset::default();
    for run in runs {
        if dg >= run.trace.layout.dg_count || dg >= run.clean.layout.dg_count {
            return Err(TraceError::MissingSignal(format!("dg{}.Vn in run {}", dg + 1, run.id)).into());
        }
        let chans = feature_channels(run.trace, dg)?;
        if run.clean.len() < run.trace.len() {
            return Err(AnnError::Dataset(format!(
                "run {}: matching clean run has {} samples, need {}",
                run.id,
                run.clean.len(),
                run.trace.len()
            )));
        }
        for (rec, target) in run.trace.records.iter().zip(&run.clean.records) {
            if rec.t < opts.discard_before {
                continue;
            }
            if (rec.t - target.t).abs() > 1e-9 {
                return Err(AnnError::Dataset(format!(
                    "run {}: sample at t={} has no aligned clean sample (found t={})",
                    run.id, rec.t, target.t
                )));
            }
            let y = target.v_nom[dg];
            let clean: Vec<f64> = chans.iter().map(|&k| rec.clean[k]).collect();
            let recv: Vec<f64> = chans.iter().map(|&k| rec.received[k]).collect();
            let row = |a: &[f64], b: &[f64]| {
                let mut x = Vec::with_capacity(2 * a.len() + 1);
                x.extend_from_slice(a);
                x.extend_from_slice(b);
                x.push(v_ref);
                x
            };
            let prov = Provenance { run: run.id.to_string(), t: rec.t, attacked: run.attacked };
            ds.push(row(&clean, &recv), y, prov.clone());
            if run.attacked && opts.duplicate_received && rec.attack_active {
                ds.push(row(&recv, &recv), y, prov);
            }
        }
    }
    Ok(ds)
}
