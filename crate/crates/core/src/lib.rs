//! Inverter-based microgrid co-simulation: droop plant on a quasi-static phasor
//! network, distributed consensus secondary control over a communication
//! digraph, false-data-injection attacks on its channels, and a neural
//! secondary voltage controller trained offline from recorded runs.

pub mod ann;
pub mod attack;
pub mod error;
pub mod graph;
pub mod harness;
pub mod plant;
pub mod secondary;

pub use error::Error;
