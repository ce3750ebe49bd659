//! Closed-loop scenario execution.

use serde::Serialize;

use crate::ann::AnnController;
use crate::attack::apply_attacks;
use crate::plant::PlantError;
use crate::secondary::{received_values, secondary_update, ControllerKind};

use super::scenario::{Scenario, ScenarioError};
use super::trace::{Trace, TraceLayout, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Samples up to (not including) the step that failed, if any.
    pub trace: Trace,
    pub diverged: Option<Divergence>,
    /// Largest relative power-balance residual over all evaluated steps.
    pub max_balance_residual: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("at t={t}: {source}")]
    Plant { t: f64, source: PlantError },
    #[error("at t={t}: {msg}")]
    Controller { t: f64, msg: String },
}

/// Runs `scenario` to completion or divergence.
///
/// Each integrator step at time `t`: apply load events due by `t`, evaluate the
/// plant, pass channels through the attack layer, record (on sample steps),
/// update the secondary controllers, then advance the plant to `t + dt`.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, RunError> {
    let n = scenario.dg_count();
    let mut grid = scenario.grid.clone();
    let layout = TraceLayout {
        dg_count: n,
        channels: scenario.channels.ids().to_vec(),
        load_count: grid.network().loads.len(),
    };
    let mut trace = Trace::new(layout);
    trace.records.reserve(scenario.steps / scenario.sample_every + 1);

    let mut ann: Vec<Option<AnnController>> = vec![None; n];
    for (i, kind) in scenario.controllers.iter().enumerate() {
        if *kind == ControllerKind::Ann {
            let bundle = scenario.model.as_ref().ok_or_else(|| RunError::Controller {
                t: 0.0,
                msg: format!("dg{} uses the ann controller but no model is loaded", i + 1),
            })?;
            ann[i] = Some(scenario.ann_controller(i, bundle)?);
        }
    }

    let refs = scenario.refs;
    let dt = scenario.dt();
    let mut state = grid.initial_state(refs.voltage, refs.frequency);
    let mut next_event = 0;
    let mut max_residual: f64 = 0.0;
    let mut diverged = None;

    for k in 0..scenario.steps {
        let t = scenario.time_at(k);
        while next_event < scenario.events.len() && scenario.events[next_event].time <= t {
            grid.apply_load_event(&scenario.events[next_event]).map_err(|e| RunError::Plant { t, source: e })?;
            // a new load count would break the trace layout
            if grid.network().loads.len() != trace.layout.load_count {
                trace.layout.load_count = grid.network().loads.len();
                if !trace.records.is_empty() {
                    return Err(RunError::Plant {
                        t,
                        source: PlantError::InvalidEvent("load events may only add loads before the first sample".into()),
                    });
                }
            }
            next_event += 1;
        }
        let out = match grid.evaluate(&state) {
            Ok(o) => o,
            Err(e @ PlantError::Diverged { .. }) => {
                diverged = Some(Divergence { t, reason: e.to_string() });
                break;
            }
            Err(e) => return Err(RunError::Plant { t, source: e }),
        };
        max_residual = max_residual.max(out.balance_residual);

        let clean = scenario.channels.clean_values(&out.voltage, &out.frequency, refs.voltage, refs.frequency);
        let received = apply_attacks(&scenario.attacks, t, &scenario.channels, &clean);
        let attack_active = scenario.attacks.iter().any(|a| a.is_active(t));

        if k % scenario.sample_every == 0 {
            trace.records.push(TraceRecord {
                t,
                voltage: out.voltage.clone(),
                frequency: out.frequency.clone(),
                p: state.p.clone(),
                q: state.q.clone(),
                v_nom: state.setpoints.voltage.clone(),
                w_nom: state.setpoints.frequency.clone(),
                clean: clean.clone(),
                received: received.clone(),
                load_current: out.load_current.clone(),
                attack_active,
            });
        }

        let views = received_values(&scenario.graph, &scenario.channels, &received);
        let droop_power: Vec<f64> = (0..n).map(|i| grid.dg(i).m_p * state.p[i] / grid.dg(i).rated_power).collect();
        let mut next = secondary_update(&scenario.gains, &scenario.graph, &views, &droop_power, refs, &state.setpoints, dt)
            .map_err(|e| RunError::Controller { t, msg: e.to_string() })?;
        for (i, c) in ann.iter_mut().enumerate() {
            if let Some(c) = c {
                next.voltage[i] =
                    c.setpoint(&views.voltage[i], refs.voltage).map_err(|e| RunError::Controller { t, msg: e.to_string() })?;
            }
        }

        state = match grid.advance(&state, &out, next, dt) {
            Ok(s) => s,
            Err(e @ PlantError::Diverged { .. }) => {
                diverged = Some(Divergence { t: scenario.time_at(k + 1), reason: e.to_string() });
                break;
            }
            Err(e) => return Err(RunError::Plant { t, source: e }),
        };
    }

    Ok(RunOutcome { trace, diverged, max_balance_residual: max_residual })
}
