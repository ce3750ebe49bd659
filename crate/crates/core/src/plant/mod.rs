//! Physical layer: droop-controlled DG voltage sources on an RL network,
//! first-order power filters, and forward-Euler time stepping.

pub mod network;

use std::f64::consts::PI;

use thiserror::Error;

pub use nalgebra::Complex;
pub use network::{solve_network, Line, Load, NetworkParams, NetworkSolution, NetworkSolver};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid DG parameters: {0}")]
    InvalidDg(String),
    #[error("admittance system is singular")]
    Singular,
    #[error("{quantity} of dg{} reached {value}, beyond bound {bound}", .dg + 1)]
    Diverged { quantity: &'static str, dg: usize, value: f64, bound: f64 },
    #[error("load event references unknown bus {bus}")]
    UnknownBus { bus: usize },
    #[error("invalid load event: {0}")]
    InvalidEvent(String),
}

/// Per-DG primary control and measurement parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgParams {
    /// Active-power droop, rad/s per pu of rated power.
    pub m_p: f64,
    /// Reactive-power droop, pu voltage per pu of rated power.
    pub n_q: f64,
    /// Power measurement low-pass cutoff, rad/s.
    pub omega_c: f64,
    /// DG rating as a fraction of the system base.
    pub rated_power: f64,
}

impl Default for DgParams {
    fn default() -> Self {
        Self { m_p: 2.0, n_q: 0.04, omega_c: 31.4, rated_power: 1.0 }
    }
}

impl DgParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("m_p", self.m_p), ("n_q", self.n_q), ("omega_c", self.omega_c), ("rated_power", self.rated_power)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// Droop laws `v = V_n - n_Q Q` and `w = w_n - m_P P`, powers on the DG's own rating.
pub fn droop_primary(params: &DgParams, v_nom: f64, w_nom: f64, p: f64, q: f64) -> (f64, f64) {
    let v = v_nom - params.n_q * q / params.rated_power;
    let w = w_nom - params.m_p * p / params.rated_power;
    (v, w)
}

/// Secondary-layer outputs handed to the droop controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPoints {
    pub voltage: Vec<f64>,
    pub frequency: Vec<f64>,
}

impl SetPoints {
    pub fn uniform(n: usize, voltage: f64, frequency: f64) -> Self {
        Self { voltage: vec![voltage; n], frequency: vec![frequency; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    /// Voltage phase angle in the frame rotating at the nominal frequency, rad.
    pub angle: Vec<f64>,
    /// Filtered active power, pu.
    pub p: Vec<f64>,
    /// Filtered reactive power, pu.
    pub q: Vec<f64>,
    pub setpoints: SetPoints,
}

/// Algebraic quantities evaluated from a state.
#[derive(Debug, Clone)]
pub struct PlantOutputs {
    pub voltage: Vec<f64>,
    pub frequency: Vec<f64>,
    pub p_inst: Vec<f64>,
    pub q_inst: Vec<f64>,
    /// Current magnitude drawn by each load, pu.
    pub load_current: Vec<f64>,
    pub balance_residual: f64,
}

/// A step change in one bus's load impedance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEvent {
    pub time: f64,
    pub bus: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone)]
pub struct Microgrid {
    dgs: Vec<DgParams>,
    solver: NetworkSolver,
    /// Rotating frame speed subtracted before angle integration, rad/s.
    frame: f64,
    bound: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

impl Microgrid {
    pub fn new(dgs: Vec<DgParams>, network: NetworkParams, frame: f64, bound: f64) -> Result<Self, PlantError> {
        for (i, d) in dgs.iter().enumerate() {
            d.validate().map_err(|m| PlantError::InvalidDg(format!("dg{}: {m}", i + 1)))?;
        }
        if dgs.len() != network.dg_bus.len() {
            return Err(PlantError::InvalidDg(format!(
                "{} DG parameter sets but {} DG bus attachments",
                dgs.len(),
                network.dg_bus.len()
            )));
        }
        if !(bound > 0.0) {
            return Err(PlantError::InvalidDg(format!("divergence bound must be positive, got {bound}")));
        }
        let solver = NetworkSolver::new(network)?;
        Ok(Self { dgs, solver, frame, bound })
    }

    pub fn dg_count(&self) -> usize {
        self.dgs.len()
    }

    pub fn dg(&self, i: usize) -> &DgParams {
        &self.dgs[i]
    }

    pub fn network(&self) -> &NetworkParams {
        self.solver.params()
    }

    /// Zero angles and powers with set-points at the references.
    pub fn initial_state(&self, v_ref: f64, w_ref: f64) -> PlantState {
        let n = self.dg_count();
        PlantState {
            angle: vec![0.0; n],
            p: vec![0.0; n],
            q: vec![0.0; n],
            setpoints: SetPoints::uniform(n, v_ref, w_ref),
        }
    }

    fn check(&self, quantity: &'static str, dg: usize, value: f64) -> Result<(), PlantError> {
        if !value.is_finite() || value.abs() > self.bound {
            return Err(PlantError::Diverged { quantity, dg, value, bound: self.bound });
        }
        Ok(())
    }

    /// Droop outputs and an instantaneous network solve. DG1's angle is the phasor reference.
    pub fn evaluate(&self, state: &PlantState) -> Result<PlantOutputs, PlantError> {
        let n = self.dg_count();
        let mut voltage = Vec::with_capacity(n);
        let mut frequency = Vec::with_capacity(n);
        for i in 0..n {
            let (v, w) =
                droop_primary(&self.dgs[i], state.setpoints.voltage[i], state.setpoints.frequency[i], state.p[i], state.q[i]);
            self.check("voltage", i, v)?;
            if !(v > 0.0) {
                return Err(PlantError::Diverged { quantity: "voltage", dg: i, value: v, bound: self.bound });
            }
            if !w.is_finite() {
                return Err(PlantError::Diverged { quantity: "frequency", dg: i, value: w, bound: self.bound });
            }
            voltage.push(v);
            frequency.push(w);
        }
        let theta0 = state.angle[0];
        let phasors: Vec<Complex64> =
            voltage.iter().zip(&state.angle).map(|(&v, &a)| Complex64::from_polar(v, a - theta0)).collect();
        let sol = self.solver.solve(&phasors)?;
        let load_current = self
            .network()
            .loads
            .iter()
            .map(|ld| sol.bus_voltage[ld.bus].norm() / ld.impedance().norm())
            .collect();
        Ok(PlantOutputs {
            voltage,
            frequency,
            p_inst: sol.injection.iter().map(|s| s.re).collect(),
            q_inst: sol.injection.iter().map(|s| s.im).collect(),
            load_current,
            balance_residual: sol.balance_residual(),
        })
    }

    /// Integrates filters and angles over `dt` using `outputs` evaluated at the
    /// start of the step, then installs `next` as the set-points.
    pub fn advance(
        &self,
        state: &PlantState,
        outputs: &PlantOutputs,
        next: SetPoints,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        let n = self.dg_count();
        let mut s = PlantState {
            angle: Vec::with_capacity(n),
            p: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            setpoints: next,
        };
        for i in 0..n {
            let wc = self.dgs[i].omega_c;
            let p = state.p[i] + dt * wc * (outputs.p_inst[i] - state.p[i]);
            let q = state.q[i] + dt * wc * (outputs.q_inst[i] - state.q[i]);
            self.check("active power", i, p)?;
            self.check("reactive power", i, q)?;
            self.check("voltage set-point", i, s.setpoints.voltage[i])?;
            if !s.setpoints.frequency[i].is_finite() {
                return Err(PlantError::Diverged {
                    quantity: "frequency set-point",
                    dg: i,
                    value: s.setpoints.frequency[i],
                    bound: self.bound,
                });
            }
            s.p.push(p);
            s.q.push(q);
            s.angle.push(wrap_angle(state.angle[i] + dt * (outputs.frequency[i] - self.frame)));
        }
        Ok(s)
    }

    /// One full step with the given set-points held over `[t, t + dt)`.
    pub fn step(&self, state: &PlantState, setpoints: &SetPoints, dt: f64) -> Result<PlantState, PlantError> {
        assert!(dt > 0.0, "step size must be positive");
        let mut s = state.clone();
        s.setpoints = setpoints.clone();
        let out = self.evaluate(&s)?;
        self.advance(&s, &out, setpoints.clone(), dt)
    }

    /// Largest state derivative magnitude, with angles taken relative to DG1.
    pub fn max_derivative(&self, state: &PlantState, outputs: &PlantOutputs) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dg_count() {
            let wc = self.dgs[i].omega_c;
            m = m.max((wc * (outputs.p_inst[i] - state.p[i])).abs());
            m = m.max((wc * (outputs.q_inst[i] - state.q[i])).abs());
            m = m.max((outputs.frequency[i] - outputs.frequency[0]).abs());
        }
        m
    }

    pub fn apply_load_event(&mut self, event: &LoadEvent) -> Result<(), PlantError> {
        if !(event.time >= 0.0) {
            return Err(PlantError::InvalidEvent(format!("time must be >= 0, got {}", event.time)));
        }
        network::validate_load_impedance(event.r, event.x).map_err(PlantError::InvalidEvent)?;
        let mut params = self.solver.params().clone();
        if event.bus >= params.buses {
            return Err(PlantError::UnknownBus { bus: event.bus + 1 });
        }
        let mut found = false;
        for ld in params.loads.iter_mut().filter(|l| l.bus == event.bus) {
            ld.r = event.r;
            ld.x = event.x;
            found = true;
        }
        if !found {
            params.loads.push(Load { bus: event.bus, r: event.r, x: event.x });
        }
        self.solver = NetworkSolver::new(params)?;
        Ok(())
    }
}

/// Default four-DG feeder: buses 1-2-3-4 in a chain, one DG per bus,
/// `0.8 + j0.3` pu loads at buses 1 and 3.
pub fn default_network() -> NetworkParams {
    let line = |a, b| Line { from: a, to: b, r: 0.05, x: 0.10 };
    NetworkParams {
        buses: 4,
        lines: vec![line(0, 1), line(1, 2), line(2, 3)],
        loads: vec![Load { bus: 0, r: 0.8, x: 0.3 }, Load { bus: 2, r: 0.8, x: 0.3 }],
        dg_bus: vec![0, 1, 2, 3],
    }
}
