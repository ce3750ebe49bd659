//! Quasi-static phasor network: nodal admittance assembly and the linear
//! solve for passive-bus voltages given DG terminal voltages.

use nalgebra::{DMatrix, DVector, LU};

use super::{Complex64, PlantError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series resistance, pu.
    pub r: f64,
    /// Series reactance, pu.
    pub x: f64,
}

impl Line {
    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }
}

/// Constant-impedance load `r + jx` to ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub bus: usize,
    pub r: f64,
    pub x: f64,
}

impl Load {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub buses: usize,
    pub lines: Vec<Line>,
    pub loads: Vec<Load>,
    /// Bus each DG is attached to, indexed by DG.
    pub dg_bus: Vec<usize>,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: String| Err(PlantError::InvalidNetwork(msg));
        if self.buses == 0 {
            return bad("network has no buses".into());
        }
        if self.dg_bus.is_empty() {
            return bad("network has no DGs".into());
        }
        for (k, l) in self.lines.iter().enumerate() {
            if l.from >= self.buses || l.to >= self.buses {
                return bad(format!("line {} references a bus outside 1..={}", k + 1, self.buses));
            }
            if l.from == l.to {
                return bad(format!("line {} connects bus {} to itself", k + 1, l.from + 1));
            }
            if !(l.r >= 0.0) || !(l.x > 0.0) || !l.r.is_finite() || !l.x.is_finite() {
                return bad(format!("line {} needs r >= 0 and x > 0, got r={} x={}", k + 1, l.r, l.x));
            }
        }
        for (k, ld) in self.loads.iter().enumerate() {
            if ld.bus >= self.buses {
                return bad(format!("load {} references bus {} outside 1..={}", k + 1, ld.bus + 1, self.buses));
            }
            validate_load_impedance(ld.r, ld.x).map_err(|m| PlantError::InvalidNetwork(format!("load {}: {m}", k + 1)))?;
        }
        for (i, &b) in self.dg_bus.iter().enumerate() {
            if b >= self.buses {
                return bad(format!("dg{} attached to bus {} outside 1..={}", i + 1, b + 1, self.buses));
            }
            if self.dg_bus[..i].contains(&b) {
                return bad(format!("dg{} shares bus {} with another DG", i + 1, b + 1));
            }
        }
        // connectivity over lines
        let mut seen = vec![false; self.buses];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for l in &self.lines {
                let other = if l.from == b {
                    l.to
                } else if l.to == b {
                    l.from
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return bad(format!("bus {} is not connected to bus 1", b + 1));
        }
        Ok(())
    }

    /// Full nodal admittance matrix, lines plus load shunts.
    pub fn admittance(&self) -> DMatrix<Complex64> {
        let n = self.buses;
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for l in &self.lines {
            let yl = l.admittance();
            y[(l.from, l.from)] += yl;
            y[(l.to, l.to)] += yl;
            y[(l.from, l.to)] -= yl;
            y[(l.to, l.from)] -= yl;
        }
        for ld in &self.loads {
            y[(ld.bus, ld.bus)] += ld.impedance().inv();
        }
        y
    }
}

pub(crate) fn validate_load_impedance(r: f64, x: f64) -> Result<(), String> {
    if !(r >= 0.0) || !r.is_finite() || !x.is_finite() || (r == 0.0 && x == 0.0) {
        return Err(format!("impedance must have r >= 0 and be nonzero, got r={r} x={x}"));
    }
    Ok(())
}

/// Result of one network solve.
#[derive(Debug, Clone)]
pub struct NetworkSolution {
    /// Complex voltage at every bus.
    pub bus_voltage: Vec<Complex64>,
    /// Complex power injected by each DG, `S = V conj(I)`.
    pub injection: Vec<Complex64>,
    /// Total complex power absorbed by loads.
    pub load_power: Complex64,
    /// Total active power lost in line resistances.
    pub line_loss: f64,
}

impl NetworkSolution {
    /// `|sum P_gen - (P_load + P_loss)| / max(|sum P_gen|, 1e-12)`.
    pub fn balance_residual(&self) -> f64 {
        let gen: f64 = self.injection.iter().map(|s| s.re).sum();
        let used = self.load_power.re + self.line_loss;
        (gen - used).abs() / gen.abs().max(1e-12)
    }
}

/// Admittance matrix with the passive-bus block factorized once.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    params: NetworkParams,
    y: DMatrix<Complex64>,
    passive: Vec<usize>,
    lu: Option<LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl NetworkSolver {
    pub fn new(params: NetworkParams) -> Result<Self, PlantError> {
        params.validate()?;
        let y = params.admittance();
        let passive: Vec<usize> = (0..params.buses).filter(|b| !params.dg_bus.contains(b)).collect();
        let lu = if passive.is_empty() {
            None
        } else {
            let m = passive.len();
            let yll = DMatrix::from_fn(m, m, |a, b| y[(passive[a], passive[b])]);
            let lu = yll.lu();
            if !lu.is_invertible() {
                return Err(PlantError::Singular);
            }
            Some(lu)
        };
        Ok(Self { params, y, passive, lu })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    /// Solves for passive-bus voltages with DG buses held at `dg_voltage`
    /// and returns injections, load consumption and line losses.
    pub fn solve(&self, dg_voltage: &[Complex64]) -> Result<NetworkSolution, PlantError> {
        let p = &self.params;
        if dg_voltage.len() != p.dg_bus.len() {
            return Err(PlantError::InvalidNetwork(format!(
                "expected {} DG voltages, got {}",
                p.dg_bus.len(),
                dg_voltage.len()
            )));
        }
        let mut v = vec![Complex64::new(0.0, 0.0); p.buses];
        for (i, &b) in p.dg_bus.iter().enumerate() {
            v[b] = dg_voltage[i];
        }
        if let Some(lu) = &self.lu {
            // Y_ll V_l = -Y_lg V_g
            let rhs = DVector::from_iterator(
                self.passive.len(),
                self.passive.iter().map(|&l| {
                    -p.dg_bus.iter().map(|&g| self.y[(l, g)] * v[g]).sum::<Complex64>()
                }),
            );
            let vl = lu.solve(&rhs).ok_or(PlantError::Singular)?;
            for (k, &l) in self.passive.iter().enumerate() {
                if !vl[k].re.is_finite() || !vl[k].im.is_finite() {
                    return Err(PlantError::Singular);
                }
                v[l] = vl[k];
            }
        }
        let injection = p
            .dg_bus
            .iter()
            .map(|&g| {
                let i: Complex64 = (0..p.buses).map(|k| self.y[(g, k)] * v[k]).sum();
                v[g] * i.conj()
            })
            .collect();
        let load_power = p
            .loads
            .iter()
            .map(|ld| {
                let vb = v[ld.bus];
                vb * (vb / ld.impedance()).conj()
            })
            .sum();
        let line_loss = p
            .lines
            .iter()
            .map(|l| {
                let i = (v[l.from] - v[l.to]) * l.admittance();
                i.norm_sqr() * l.r
            })
            .sum();
        Ok(NetworkSolution { bus_voltage: v, injection, load_power, line_loss })
    }
}

/// One-shot solve from DG voltage magnitudes and angles.
pub fn solve_network(
    magnitude: &[f64],
    angle: &[f64],
    net: &NetworkParams,
) -> Result<NetworkSolution, PlantError> {
    let v: Vec<Complex64> = magnitude
        .iter()
        .zip(angle)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    NetworkSolver::new(net.clone())?.solve(&v)
}
