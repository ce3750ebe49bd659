//! False-data injection on communication channels.
//!
//! A corrupted channel delivers `h(u) = u + phi(t)` where, from the start time
//! on, `phi = alpha * u` (non-periodic) or `phi = beta * sin(omega * t) * u`
//! (periodic). The sine phase is referenced to simulation time zero.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::graph::CommGraph;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("cannot parse channel target `{0}`: expected `<dgN|ref>.<voltage|frequency> -> <dgM|broadcast>`")]
    Syntax(String),
    #[error("attack start time must be finite and >= 0, got {0}")]
    StartTime(f64),
    #[error("attack end time {end} must be after start time {start}")]
    EndTime { start: f64, end: f64 },
    #[error("attack parameter {name} must be finite, got {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("attack target `{0}` matches no channel of the communication graph")]
    UnknownChannel(String),
    #[error("channel set is missing `{0}`")]
    MissingChannel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signal {
    Voltage,
    Frequency,
}

impl Signal {
    pub fn name(self) -> &'static str {
        match self {
            Signal::Voltage => "voltage",
            Signal::Frequency => "frequency",
        }
    }
}

/// Origin of a shared value: a DG or the global reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Dg(usize),
    Reference,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Dg(i) => write!(f, "dg{}", i + 1),
            Source::Reference => f.write_str("ref"),
        }
    }
}

/// One directed link carrying one signal. `src == Dg(dst)` is the DG's own
/// measurement path into its secondary controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub src: Source,
    pub dst: usize,
    pub signal: Signal,
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->dg{}.{}", self.src, self.dst + 1, self.signal.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Dg(usize),
    Broadcast,
}

/// Which channels an attack corrupts, e.g. `dg1.voltage -> broadcast`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackTarget {
    pub src: Source,
    pub signal: Signal,
    pub dst: Destination,
}

impl AttackTarget {
    pub fn matches(&self, ch: &ChannelId) -> bool {
        ch.src == self.src
            && ch.signal == self.signal
            && match self.dst {
                Destination::Broadcast => true,
                Destination::Dg(d) => ch.dst == d,
            }
    }
}

fn parse_dg(s: &str) -> Option<usize> {
    let n: usize = s.strip_prefix("dg")?.parse().ok()?;
    n.checked_sub(1)
}

impl FromStr for AttackTarget {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AttackError::Syntax(s.to_string());
        let (lhs, rhs) = s.split_once("->").ok_or_else(err)?;
        let (src, sig) = lhs.trim().split_once('.').ok_or_else(err)?;
        let src = match src {
            "ref" => Source::Reference,
            other => Source::Dg(parse_dg(other).ok_or_else(err)?),
        };
        let signal = match sig {
            "voltage" | "v" => Signal::Voltage,
            "frequency" | "w" => Signal::Frequency,
            _ => return Err(err()),
        };
        let dst = match rhs.trim() {
            "broadcast" => Destination::Broadcast,
            other => Destination::Dg(parse_dg(other).ok_or_else(err)?),
        };
        Ok(Self { src, signal, dst })
    }
}

impl fmt::Display for AttackTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{} -> ", self.src, self.signal.name())?;
        match self.dst {
            Destination::Broadcast => f.write_str("broadcast"),
            Destination::Dg(d) => write!(f, "dg{}", d + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    NonPeriodic { alpha: f64 },
    /// `omega` in rad/s.
    Periodic { beta: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub target: AttackTarget,
    pub kind: AttackKind,
    pub start: f64,
    pub end: Option<f64>,
}

impl AttackSpec {
    pub fn new(target: AttackTarget, kind: AttackKind, start: f64, end: Option<f64>) -> Result<Self, AttackError> {
        if !(start >= 0.0) || !start.is_finite() {
            return Err(AttackError::StartTime(start));
        }
        if let Some(end) = end {
            if !(end > start) {
                return Err(AttackError::EndTime { start, end });
            }
        }
        let params: &[(&'static str, f64)] = match kind {
            AttackKind::NonPeriodic { alpha } => &[("alpha", alpha)],
            AttackKind::Periodic { beta, omega } => &[("beta", beta), ("omega", omega)],
        };
        for &(name, value) in params {
            if !value.is_finite() {
                return Err(AttackError::Parameter { name, value });
            }
        }
        Ok(Self { target, kind, start, end })
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e)
    }

    /// Corrupted value `h(u)` at time `t`.
    pub fn inject(&self, t: f64, u: f64) -> f64 {
        if !self.is_active(t) {
            return u;
        }
        match self.kind {
            AttackKind::NonPeriodic { alpha } => u + alpha * u,
            AttackKind::Periodic { beta, omega } => u + beta * (omega * t).sin() * u,
        }
    }
}

/// Ordered set of channels with values aligned to `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    ids: Vec<ChannelId>,
}

impl ChannelSet {
    /// Every channel implied by the graph: for each signal and each DG, its own
    /// measurement, one link per in-neighbor, and the reference link if pinned.
    pub fn for_graph(graph: &CommGraph) -> Self {
        let mut ids = Vec::new();
        for signal in [Signal::Voltage, Signal::Frequency] {
            for dst in 0..graph.len() {
                ids.push(ChannelId { src: Source::Dg(dst), dst, signal });
                for (j, _) in graph.in_neighbors(dst) {
                    ids.push(ChannelId { src: Source::Dg(j), dst, signal });
                }
                if graph.is_pinned(dst) {
                    ids.push(ChannelId { src: Source::Reference, dst, signal });
                }
            }
        }
        Self { ids }
    }

    /// Accepts an explicit channel list, checking it covers every channel the graph needs.
    pub fn from_ids(graph: &CommGraph, ids: Vec<ChannelId>) -> Result<Self, AttackError> {
        for needed in Self::for_graph(graph).ids {
            if !ids.contains(&needed) {
                return Err(AttackError::MissingChannel(needed.to_string()));
            }
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[ChannelId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: &ChannelId) -> Option<usize> {
        self.ids.iter().position(|c| c == id)
    }

    pub fn validate_target(&self, target: &AttackTarget) -> Result<(), AttackError> {
        if self.ids.iter().any(|c| target.matches(c)) {
            Ok(())
        } else {
            Err(AttackError::UnknownChannel(target.to_string()))
        }
    }

    /// Clean channel values from the DG outputs and the references.
    pub fn clean_values(&self, voltage: &[f64], frequency: &[f64], v_ref: f64, w_ref: f64) -> Vec<f64> {
        self.ids
            .iter()
            .map(|c| match (c.src, c.signal) {
                (Source::Dg(j), Signal::Voltage) => voltage[j],
                (Source::Dg(j), Signal::Frequency) => frequency[j],
                (Source::Reference, Signal::Voltage) => v_ref,
                (Source::Reference, Signal::Frequency) => w_ref,
            })
            .collect()
    }
}

/// Passes every channel through each spec targeting it, in declaration order.
pub fn apply_attacks(specs: &[AttackSpec], t: f64, channels: &ChannelSet, values: &[f64]) -> Vec<f64> {
    channels
        .ids()
        .iter()
        .zip(values)
        .map(|(id, &u)| {
            specs.iter().filter(|s| s.target.matches(id)).fold(u, |acc, s| s.inject(t, acc))
        })
        .collect()
}
