//! Runtime use of a trained network as a DG's voltage secondary controller.

use crate::secondary::DgView;

use super::mlp::Mlp;
use super::AnnError;

pub const SETPOINT_MIN: f64 = 0.5;
pub const SETPOINT_MAX: f64 = 1.5;

pub fn clamp_setpoint(v: f64) -> f64 {
    v.clamp(SETPOINT_MIN, SETPOINT_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnController {
    pub dg: usize,
    net: Mlp,
    features: Vec<f64>,
}

impl AnnController {
    /// `expected_neighbors` is the in-neighbor count of `dg`; the network must
    /// take `2 * (1 + expected_neighbors) + 1` inputs.
    pub fn new(dg: usize, net: Mlp, expected_neighbors: usize) -> Result<Self, AnnError> {
        let want = 2 * (1 + expected_neighbors) + 1;
        if net.inputs() != want {
            return Err(AnnError::Shape(format!(
                "network for dg{} takes {} inputs, dg{} has {expected_neighbors} in-neighbors so needs {want}",
                dg + 1,
                net.inputs(),
                dg + 1
            )));
        }
        Ok(Self { dg, net, features: vec![0.0; want] })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    /// Runtime feature vector: the received triple twice, then `v*`.
    pub fn features(view: &DgView, v_ref: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * (1 + view.neighbors.len()) + 1);
        Self::fill(view, v_ref, &mut x);
        x
    }

    fn fill(view: &DgView, v_ref: f64, x: &mut Vec<f64>) {
        x.clear();
        let mut nbrs = view.neighbors.clone();
        nbrs.sort_by_key(|&(j, _)| j);
        let triple = std::iter::once(view.own).chain(nbrs.iter().map(|&(_, v)| v));
        x.extend(triple.clone());
        x.extend(triple);
        x.push(v_ref);
    }

    /// Voltage set-point for this DG, clamped to `[0.5, 1.5]` pu.
    pub fn setpoint(&mut self, view: &DgView, v_ref: f64) -> Result<f64, AnnError> {
        let mut x = std::mem::take(&mut self.features);
        Self::fill(view, v_ref, &mut x);
        let y = self.net.forward(&x);
        self.features = x;
        let y = y?;
        if y.is_nan() {
            return Err(AnnError::NonFinite(format!("dg{} controller output", self.dg + 1)));
        }
        Ok(clamp_setpoint(y))
    }
}
