//! Regulation statistics over a recorded trace.
//!
//! The post-attack window starts `POST_ATTACK_DELAY` after the first sample
//! flagged as under attack; without an attack it starts at `t0 + POST_ATTACK_DELAY`.
//! Steady-state figures use the final `STEADY_WINDOW` seconds.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::secondary::References;

use super::trace::Trace;

pub const POST_ATTACK_DELAY: f64 = 0.5;
pub const STEADY_WINDOW: f64 = 0.5;
/// Settling band around `v*`, as a fraction.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trace is empty")]
    Empty,
    #[error("{what} window of {window} s does not fit in a trace spanning {span} s")]
    Window { what: &'static str, window: f64, span: f64 },
    #[error("dg{} is not in the trace", .0 + 1)]
    NoSuchDg(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// DG whose voltage defines `eps_v` (1-based in reports).
    pub tracked_dg: usize,
    /// `|v - v*|` of the tracked DG at every sample, pu.
    #[serde(skip_serializing)]
    pub eps_v: Vec<f64>,
    pub attack_onset: Option<f64>,
    pub post_window_start: f64,
    pub post_eps_mean: f64,
    pub post_eps_max: f64,
    /// Largest `|v - v*| / v*` of the tracked DG in the post window, %.
    pub post_max_error_pct: f64,
    /// Half the peak-to-peak swing of the tracked DG's voltage in the post window, pu.
    pub post_ripple: f64,
    /// `|mean(v_i) - v*| / v*` over the final window, %, per DG.
    pub steady_voltage_error_pct: Vec<f64>,
    /// `max |v_i - v*| / v*` over the final window, %, per DG.
    pub final_max_voltage_error_pct: Vec<f64>,
    /// `mean(w_i - w*) / 2pi` over the final window, Hz, per DG.
    pub steady_frequency_error_hz: Vec<f64>,
    /// `max |w_i - w*| / w*` over the final window, %, per DG.
    pub final_max_frequency_error_pct: Vec<f64>,
    /// Time after the attack onset (or trace start) from which the tracked DG
    /// stays inside the 2% band; `None` if it is outside at the last sample.
    pub settling_time: Option<f64>,
    pub diverged: bool,
    pub diverged_at: Option<f64>,
}

impl Metrics {
    pub fn max_steady_voltage_error_pct(&self) -> f64 {
        self.steady_voltage_error_pct.iter().fold(0.0, |a, &b| a.max(b))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn compute_metrics(
    trace: &Trace,
    refs: References,
    tracked_dg: usize,
    diverged_at: Option<f64>,
) -> Result<Metrics, MetricsError> {
    let recs = &trace.records;
    let (first, last) = match (recs.first(), recs.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(MetricsError::Empty),
    };
    if tracked_dg >= trace.layout.dg_count {
        return Err(MetricsError::NoSuchDg(tracked_dg));
    }
    let span = last - first;
    if STEADY_WINDOW > span {
        return Err(MetricsError::Window { what: "steady-state", window: STEADY_WINDOW, span });
    }
    let onset = trace.attack_onset();
    let origin = onset.unwrap_or(first);
    let post_start = origin + POST_ATTACK_DELAY;
    if post_start > last {
        return Err(MetricsError::Window { what: "post-attack", window: post_start - first, span });
    }

    let v_ref = refs.voltage;
    let w_ref = refs.frequency;
    let eps_v: Vec<f64> = recs.iter().map(|r| (r.voltage[tracked_dg] - v_ref).abs()).collect();

    let post: Vec<usize> = (0..recs.len()).filter(|&k| recs[k].t >= post_start).collect();
    let post_eps_mean = mean(post.iter().map(|&k| eps_v[k]));
    let post_eps_max = post.iter().fold(0.0_f64, |a, &k| a.max(eps_v[k]));
    let (lo, hi) = post.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        let v = recs[k].voltage[tracked_dg];
        (lo.min(v), hi.max(v))
    });

    let steady_start = last - STEADY_WINDOW;
    let steady: Vec<usize> = (0..recs.len()).filter(|&k| recs[k].t >= steady_start - 1e-12).collect();
    let n = trace.layout.dg_count;
    let mut steady_voltage_error_pct = Vec::with_capacity(n);
    let mut final_max_voltage_error_pct = Vec::with_capacity(n);
    let mut steady_frequency_error_hz = Vec::with_capacity(n);
    let mut final_max_frequency_error_pct = Vec::with_capacity(n);
    for i in 0..n {
        let vm = mean(steady.iter().map(|&k| recs[k].voltage[i]));
        steady_voltage_error_pct.push(100.0 * (vm - v_ref).abs() / v_ref);
        final_max_voltage_error_pct
            .push(steady.iter().fold(0.0_f64, |a, &k| a.max(100.0 * (recs[k].voltage[i] - v_ref).abs() / v_ref)));
        steady_frequency_error_hz.push(mean(steady.iter().map(|&k| recs[k].frequency[i] - w_ref)) / (2.0 * PI));
        final_max_frequency_error_pct
            .push(steady.iter().fold(0.0_f64, |a, &k| a.max(100.0 * (recs[k].frequency[i] - w_ref).abs() / w_ref)));
    }

    let band = SETTLING_BAND * v_ref;
    let from: Vec<usize> = (0..recs.len()).filter(|&k| recs[k].t >= origin).collect();
    let settling_time = match from.iter().rposition(|&k| eps_v[k] > band) {
        None => Some(0.0),
        Some(p) if p + 1 < from.len() => Some(recs[from[p + 1]].t - origin),
        Some(_) => None,
    };

    Ok(Metrics {
        tracked_dg,
        eps_v,
        attack_onset: onset,
        post_window_start: post_start,
        post_eps_mean,
        post_eps_max,
        post_max_error_pct: 100.0 * post_eps_max / v_ref,
        post_ripple: 0.5 * (hi - lo),
        steady_voltage_error_pct,
        final_max_voltage_error_pct,
        steady_frequency_error_hz,
        final_max_frequency_error_pct,
        settling_time,
        diverged: diverged_at.is_some(),
        diverged_at,
    })
}
