//! Distributed cooperative secondary control.
//!
//! Each DG integrates its neighborhood tracking error, computed from the
//! values it *receives* (its own measurement included), so a corrupted
//! channel enters the loop exactly where the attacker placed it.

use std::fmt;
use std::str::FromStr;

use crate::attack::{ChannelSet, Signal, Source};
use crate::graph::{CommGraph, GraphError};
use crate::plant::SetPoints;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondaryGains {
    /// Voltage consensus integral gain, 1/s.
    pub c_v: f64,
    /// Frequency consensus integral gain, 1/s.
    pub c_w: f64,
}

impl Default for SecondaryGains {
    fn default() -> Self {
        Self { c_v: 5.0, c_w: 5.0 }
    }
}

impl SecondaryGains {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.c_v > 0.0 && self.c_v.is_finite()) || !(self.c_w > 0.0 && self.c_w.is_finite()) {
            return Err(format!("gains must be positive, got c_v={} c_w={}", self.c_v, self.c_w));
        }
        Ok(())
    }
}

/// Voltage secondary controller selected for a DG. Frequency always uses the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    /// Consensus-integral baseline, named `pi` in scenario files.
    Pi,
    /// Trained neural voltage controller.
    Ann,
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pi" => Ok(Self::Pi),
            "ann" => Ok(Self::Ann),
            other => Err(format!("unknown controller `{other}`, expected `pi` or `ann`")),
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pi => "pi",
            Self::Ann => "ann",
        })
    }
}

/// What one DG sees of one signal: its own value, one value per in-neighbor,
/// and the reference if pinned.
#[derive(Debug, Clone, PartialEq)]
pub struct DgView {
    pub own: f64,
    pub neighbors: Vec<(usize, f64)>,
    pub reference: Option<f64>,
}

impl DgView {
    /// Dense vector for [`CommGraph::tracking_error`]; non-neighbors are zero
    /// and carry zero weight.
    fn dense(&self, dg: usize, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        x[dg] = self.own;
        for &(j, v) in &self.neighbors {
            x[j] = v;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedValues {
    pub voltage: Vec<DgView>,
    pub frequency: Vec<DgView>,
}

/// Groups channel values (as delivered by the attack layer) into per-DG views.
pub fn received_values(graph: &CommGraph, channels: &ChannelSet, values: &[f64]) -> ReceivedValues {
    let n = graph.len();
    let blank = || DgView { own: f64::NAN, neighbors: Vec::new(), reference: None };
    let mut voltage: Vec<DgView> = (0..n).map(|_| blank()).collect();
    let mut frequency: Vec<DgView> = (0..n).map(|_| blank()).collect();
    for (id, &u) in channels.ids().iter().zip(values) {
        let view = match id.signal {
            Signal::Voltage => &mut voltage[id.dst],
            Signal::Frequency => &mut frequency[id.dst],
        };
        match id.src {
            Source::Dg(j) if j == id.dst => view.own = u,
            Source::Dg(j) => view.neighbors.push((j, u)),
            Source::Reference => view.reference = Some(u),
        }
    }
    ReceivedValues { voltage, frequency }
}

/// Global references `(v*, w*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct References {
    pub voltage: f64,
    pub frequency: f64,
}

/// One forward-Euler step of the consensus integrators:
///
/// `dV_n,i/dt = -c_v e_v,i`
/// `dw_n,i/dt = -c_w (e_w,i + sum_j a_ij (m_P,i P_i - m_P,j P_j))`
///
/// `droop_power[i]` is `m_P,i P_i`.
pub fn secondary_update(
    gains: &SecondaryGains,
    graph: &CommGraph,
    received: &ReceivedValues,
    droop_power: &[f64],
    refs: References,
    state: &SetPoints,
    dt: f64,
) -> Result<SetPoints, GraphError> {
    let n = graph.len();
    if droop_power.len() != n {
        return Err(GraphError::ValuesLength { n, len: droop_power.len() });
    }
    let mut next = state.clone();
    for i in 0..n {
        let vv = &received.voltage[i];
        let ev = graph.tracking_error(i, &vv.dense(i, n), vv.reference.unwrap_or(refs.voltage))?;
        let wv = &received.frequency[i];
        let ew = graph.tracking_error(i, &wv.dense(i, n), wv.reference.unwrap_or(refs.frequency))?;
        let sharing: f64 = graph.in_neighbors(i).map(|(j, a)| a * (droop_power[i] - droop_power[j])).sum();
        next.voltage[i] = state.voltage[i] - dt * gains.c_v * ev;
        next.frequency[i] = state.frequency[i] - dt * gains.c_w * (ew + sharing);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{apply_attacks, AttackKind, AttackSpec};

    const W0: f64 = 376.99111843077515;

    fn refs() -> References {
        References { voltage: 1.0, frequency: W0 }
    }

    #[test]
    fn clean_channels_reproduce_plant_values() {
        let g = CommGraph::ring(4).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let v = [1.0, 1.01, 0.99, 1.02];
        let w = [W0, W0 + 0.1, W0 - 0.1, W0];
        let r = received_values(&g, &ch, &apply_attacks(&[], 0.0, &ch, &ch.clean_values(&v, &w, 1.0, W0)));
        for i in 0..4 {
            assert_eq!(r.voltage[i].own, v[i]);
            for &(j, x) in &r.voltage[i].neighbors {
                assert_eq!(x, v[j]);
            }
            assert_eq!(r.frequency[i].own, w[i]);
        }
        assert_eq!(r.voltage[0].reference, Some(1.0));
        assert_eq!(r.voltage[1].reference, None);
    }

    #[test]
    fn attack_on_dg1_reaches_only_its_neighbors() {
        let g = CommGraph::ring(4).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let spec = AttackSpec::new("dg1.voltage -> broadcast".parse().unwrap(), AttackKind::NonPeriodic { alpha: 0.5 }, 2.0, None)
            .unwrap();
        let v = [0.98, 1.0, 1.0, 1.0];
        let recv = apply_attacks(&[spec], 2.5, &ch, &ch.clean_values(&v, &[W0; 4], 1.0, W0));
        let r = received_values(&g, &ch, &recv);
        assert_eq!(r.voltage[1].neighbors[0], (0, 1.5 * 0.98));
        assert_eq!(r.voltage[3].neighbors[0], (0, 1.5 * 0.98));
        assert!(r.voltage[2].neighbors.iter().all(|&(j, _)| j != 0));
    }

    #[test]
    fn zero_error_is_a_fixed_point() {
        let g = CommGraph::ring(4).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let r = received_values(&g, &ch, &ch.clean_values(&[1.0; 4], &[W0; 4], 1.0, W0));
        let sp = SetPoints { voltage: vec![1.03, 0.99, 1.02, 0.98], frequency: vec![W0 + 1.0; 4] };
        let next = secondary_update(&SecondaryGains::default(), &g, &r, &[0.7; 4], refs(), &sp, 1e-3).unwrap();
        assert_eq!(next, sp);
    }

    #[test]
    fn two_dg_hand_step() {
        let g = CommGraph::from_edges(2, &[(1, 0, 1.0), (0, 1, 1.0)], vec![1.0, 0.0]).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let r = received_values(&g, &ch, &ch.clean_values(&[1.05, 1.0], &[W0; 2], 1.0, W0));
        let sp = SetPoints::uniform(2, 1.0, W0);
        let next = secondary_update(&SecondaryGains::default(), &g, &r, &[0.0; 2], refs(), &sp, 1e-3).unwrap();
        assert!((next.voltage[0] - (1.0 - 5e-4)).abs() < 1e-15);
    }

    #[test]
    fn translation_leaves_voltage_update_unchanged() {
        let g = CommGraph::ring(4).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let v = [1.01, 0.97, 1.02, 0.995];
        let sp = SetPoints::uniform(4, 1.0, W0);
        let gains = SecondaryGains::default();
        let base = received_values(&g, &ch, &ch.clean_values(&v, &[W0; 4], 1.0, W0));
        let a = secondary_update(&gains, &g, &base, &[0.0; 4], refs(), &sp, 1e-3).unwrap();
        let c = 0.2;
        let vs: Vec<f64> = v.iter().map(|x| x + c).collect();
        let shifted = received_values(&g, &ch, &ch.clean_values(&vs, &[W0; 4], 1.0 + c, W0));
        let b = secondary_update(&gains, &g, &shifted, &[0.0; 4], References { voltage: 1.0 + c, frequency: W0 }, &sp, 1e-3)
            .unwrap();
        for i in 0..4 {
            assert!((a.voltage[i] - b.voltage[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn power_sharing_term_pushes_frequency() {
        let g = CommGraph::ring(4).unwrap();
        let ch = ChannelSet::for_graph(&g);
        let r = received_values(&g, &ch, &ch.clean_values(&[1.0; 4], &[W0; 4], 1.0, W0));
        let sp = SetPoints::uniform(4, 1.0, W0);
        let next = secondary_update(&SecondaryGains::default(), &g, &r, &[1.0, 0.0, 0.0, 0.0], refs(), &sp, 1e-3).unwrap();
        // dg1 overloaded relative to neighbors lowers its frequency set-point
        assert!(next.frequency[0] < W0);
        assert!(next.frequency[1] > W0);
        assert_eq!(next.frequency[2], W0);
    }

    #[test]
    fn controller_names() {
        assert_eq!("pi".parse::<ControllerKind>(), Ok(ControllerKind::Pi));
        assert_eq!("ann".parse::<ControllerKind>(), Ok(ControllerKind::Ann));
        assert!("pid".parse::<ControllerKind>().is_err());
    }
}
