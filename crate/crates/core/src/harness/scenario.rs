//! Scenario files (TOML) and their validated runtime form.
//!
//! Bus and DG indices in files are 1-based. Every field has a default, so an
//! empty file describes the attack-free four-DG feeder.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{AnnController, AnnError, ModelBundle};
use crate::attack::{AttackError, AttackKind, AttackSpec, AttackTarget, ChannelSet};
use crate::graph::{CommGraph, GraphError};
use crate::plant::{default_network, DgParams, Line, Load, LoadEvent, Microgrid, NetworkParams, PlantError};
use crate::secondary::{ControllerKind, References, SecondaryGains};

pub const NOMINAL_FREQUENCY: f64 = 2.0 * PI * 60.0;

const EMBEDDED: [(&str, &str); 3] = [
    ("default", include_str!("../../scenarios/default.toml")),
    ("default-nonperiodic", include_str!("../../scenarios/default-nonperiodic.toml")),
    ("default-periodic", include_str!("../../scenarios/default-periodic.toml")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown scenario `{0}`: not a file and not one of default, default-nonperiodic, default-periodic")]
    Unknown(String),
    #[error("{field}: {msg}")]
    Invalid { field: String, msg: String },
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("{field}: {source}")]
    Attack { field: String, source: AttackError },
    #[error("model: {0}")]
    Model(#[from] AnnError),
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Simulated time, s.
    pub duration: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Trace sampling period, s. Must be a whole multiple of `dt`.
    pub sample_period: f64,
    pub seed: u64,
    /// Magnitude beyond which a run is reported as diverged, pu.
    pub divergence_bound: f64,
    pub references: ReferenceConfig,
    pub secondary: GainsConfig,
    pub controller: ControllerConfig,
    /// One entry per DG, or empty for defaults everywhere.
    pub dgs: Vec<DgConfig>,
    pub network: NetworkConfig,
    pub graph: GraphConfig,
    pub load_events: Vec<LoadEventConfig>,
    pub attacks: Vec<AttackConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            duration: 4.0,
            dt: 1e-4,
            sample_period: 1e-3,
            seed: 0,
            divergence_bound: 10.0,
            references: ReferenceConfig::default(),
            secondary: GainsConfig::default(),
            controller: ControllerConfig::default(),
            dgs: Vec::new(),
            network: NetworkConfig::default(),
            graph: GraphConfig::default(),
            load_events: Vec::new(),
            attacks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// pu
    pub voltage: f64,
    /// rad/s
    pub frequency: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { voltage: 1.0, frequency: NOMINAL_FREQUENCY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub c_v: f64,
    pub c_w: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        let g = SecondaryGains::default();
        Self { c_v: g.c_v, c_w: g.c_w }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// `pi` or `ann`, applied to every DG not listed in `per_dg`.
    pub kind: String,
    /// Optional per-DG override, one entry per DG.
    pub per_dg: Option<Vec<String>>,
    /// Model file, relative paths resolved against the scenario file.
    pub model: Option<PathBuf>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { kind: "pi".into(), per_dg: None, model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgConfig {
    pub m_p: f64,
    pub n_q: f64,
    pub omega_c: f64,
    pub rated_power: f64,
}

impl Default for DgConfig {
    fn default() -> Self {
        let d = DgParams::default();
        Self { m_p: d.m_p, n_q: d.n_q, omega_c: d.omega_c, rated_power: d.rated_power }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub bus: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub buses: usize,
    pub dg_bus: Vec<usize>,
    pub lines: Vec<LineConfig>,
    pub loads: Vec<LoadConfig>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let n = default_network();
        Self {
            buses: n.buses,
            dg_bus: n.dg_bus.iter().map(|b| b + 1).collect(),
            lines: n.lines.iter().map(|l| LineConfig { from: l.from + 1, to: l.to + 1, r: l.r, x: l.x }).collect(),
            loads: n.loads.iter().map(|l| LoadConfig { bus: l.bus + 1, r: l.r, x: l.x }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    /// Sending DG.
    pub from: usize,
    /// Receiving DG.
    pub to: usize,
    #[serde(default = "unit")]
    pub weight: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub edges: Vec<EdgeConfig>,
    pub pinning: Vec<f64>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        let g = CommGraph::ring(4).expect("ring is valid");
        Self {
            edges: g.edges().into_iter().map(|(from, to, weight)| EdgeConfig { from: from + 1, to: to + 1, weight }).collect(),
            pinning: (0..4).map(|i| g.pinning(i)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEventConfig {
    pub time: f64,
    pub bus: usize,
    pub r: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// e.g. `dg1.voltage -> broadcast`
    pub target: String,
    /// `nonperiodic` or `periodic`
    pub kind: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// rad/s
    pub omega: Option<f64>,
    pub tau: f64,
    pub end: Option<f64>,
}

impl AttackConfig {
    fn build(&self, field: &str) -> Result<AttackSpec, ScenarioError> {
        let target: AttackTarget =
            self.target.parse().map_err(|e| ScenarioError::Attack { field: format!("{field}.target"), source: e })?;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| invalid(format!("{field}.{name}"), format!("required for kind `{}`", self.kind)));
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(invalid(format!("{field}.{name}"), format!("not used by kind `{}`", self.kind))),
            None => Ok(()),
        };
        let kind = match self.kind.as_str() {
            "nonperiodic" => {
                forbid(self.beta, "beta")?;
                forbid(self.omega, "omega")?;
                AttackKind::NonPeriodic { alpha: need(self.alpha, "alpha")? }
            }
            "periodic" => {
                forbid(self.alpha, "alpha")?;
                AttackKind::Periodic { beta: need(self.beta, "beta")?, omega: need(self.omega, "omega")? }
            }
            other => return Err(invalid(format!("{field}.kind"), format!("unknown attack kind `{other}`, expected `nonperiodic` or `periodic`"))),
        };
        AttackSpec::new(target, kind, self.tau, self.end).map_err(|e| ScenarioError::Attack { field: field.into(), source: e })
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn embedded(name: &str) -> Option<Self> {
        EMBEDDED.iter().find(|(n, _)| *n == name).map(|(_, text)| Self::from_toml(text).expect("embedded scenario parses"))
    }

    pub fn embedded_names() -> impl Iterator<Item = &'static str> {
        EMBEDDED.iter().map(|(n, _)| *n)
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: Microgrid,
    pub graph: CommGraph,
    pub channels: ChannelSet,
    pub attacks: Vec<AttackSpec>,
    /// Sorted by time, declaration order kept for ties.
    pub events: Vec<LoadEvent>,
    pub refs: References,
    pub gains: SecondaryGains,
    pub controllers: Vec<ControllerKind>,
    pub model: Option<ModelBundle>,
    /// Integrator steps per recorded sample.
    pub sample_every: usize,
    pub steps: usize,
    steps_per_second: Option<f64>,
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn one_based(field: &str, k: usize, n: usize) -> Result<usize, ScenarioError> {
    if k == 0 || k > n {
        return Err(invalid(field, format!("index {k} outside 1..={n}")));
    }
    Ok(k - 1)
}

/// `x / unit` if it is a whole number (to 1e-9 relative), else `None`.
fn whole_ratio(x: f64, unit: f64) -> Option<usize> {
    let r = x / unit;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.abs().max(1.0) && k >= 1.0).then_some(k as usize)
}

impl Scenario {
    /// Resolves `source` as a file path if one exists, else as an embedded scenario name.
    pub fn load(source: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(source);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.into(), source: e })?;
            let cfg = ScenarioConfig::from_toml(&text)?;
            return Self::from_config(cfg, path.parent());
        }
        let cfg = ScenarioConfig::embedded(source).ok_or_else(|| ScenarioError::Unknown(source.into()))?;
        Self::from_config(cfg, None)
    }

    pub fn from_config(mut config: ScenarioConfig, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let c = &config;
        positive("duration", c.duration)?;
        positive("dt", c.dt)?;
        positive("sample_period", c.sample_period)?;
        positive("divergence_bound", c.divergence_bound)?;
        positive("references.voltage", c.references.voltage)?;
        positive("references.frequency", c.references.frequency)?;
        if c.sample_period < c.dt {
            return Err(invalid("sample_period", format!("{} is below the integrator step {}", c.sample_period, c.dt)));
        }
        let sample_every = whole_ratio(c.sample_period, c.dt)
            .ok_or_else(|| invalid("sample_period", format!("{} is not a whole multiple of dt = {}", c.sample_period, c.dt)))?;
        let steps = whole_ratio(c.duration, c.dt)
            .ok_or_else(|| invalid("duration", format!("{} is not a whole multiple of dt = {}", c.duration, c.dt)))?;
        let gains = SecondaryGains { c_v: c.secondary.c_v, c_w: c.secondary.c_w };
        gains.validate().map_err(|m| invalid("secondary", m))?;

        let net = &c.network;
        if net.buses == 0 {
            return Err(invalid("network.buses", "must be at least 1"));
        }
        let n = net.dg_bus.len();
        if n == 0 {
            return Err(invalid("network.dg_bus", "at least one DG is required"));
        }
        let mut network = NetworkParams { buses: net.buses, lines: Vec::new(), loads: Vec::new(), dg_bus: Vec::new() };
        for (k, &b) in net.dg_bus.iter().enumerate() {
            network.dg_bus.push(one_based(&format!("network.dg_bus[{k}]"), b, net.buses)?);
        }
        for (k, l) in net.lines.iter().enumerate() {
            let f = format!("network.lines[{k}]");
            network.lines.push(Line {
                from: one_based(&format!("{f}.from"), l.from, net.buses)?,
                to: one_based(&format!("{f}.to"), l.to, net.buses)?,
                r: l.r,
                x: l.x,
            });
        }
        for (k, l) in net.loads.iter().enumerate() {
            let bus = one_based(&format!("network.loads[{k}].bus"), l.bus, net.buses)?;
            network.loads.push(Load { bus, r: l.r, x: l.x });
        }
        let dgs: Vec<DgParams> = if c.dgs.is_empty() {
            vec![DgParams::default(); n]
        } else if c.dgs.len() == n {
            c.dgs
                .iter()
                .map(|d| DgParams { m_p: d.m_p, n_q: d.n_q, omega_c: d.omega_c, rated_power: d.rated_power })
                .collect()
        } else {
            return Err(invalid("dgs", format!("{} entries for {n} DGs", c.dgs.len())));
        };
        let grid = Microgrid::new(dgs, network, c.references.frequency, c.divergence_bound)?;

        if c.graph.pinning.len() != n {
            return Err(invalid("graph.pinning", format!("{} entries for {n} DGs", c.graph.pinning.len())));
        }
        let mut edges = Vec::with_capacity(c.graph.edges.len());
        for (k, e) in c.graph.edges.iter().enumerate() {
            let f = format!("graph.edges[{k}]");
            edges.push((one_based(&format!("{f}.from"), e.from, n)?, one_based(&format!("{f}.to"), e.to, n)?, e.weight));
        }
        let graph = CommGraph::from_edges(n, &edges, c.graph.pinning.clone())?;
        let channels = ChannelSet::for_graph(&graph);

        let mut attacks = Vec::with_capacity(c.attacks.len());
        for (k, a) in c.attacks.iter().enumerate() {
            let field = format!("attacks[{k}]");
            let spec = a.build(&field)?;
            if let crate::attack::Source::Dg(j) = spec.target.src {
                if j >= n {
                    return Err(invalid(format!("{field}.target"), format!("dg{} does not exist", j + 1)));
                }
            }
            channels
                .validate_target(&spec.target)
                .map_err(|e| ScenarioError::Attack { field: format!("{field}.target"), source: e })?;
            attacks.push(spec);
        }

        let mut events = Vec::with_capacity(c.load_events.len());
        for (k, e) in c.load_events.iter().enumerate() {
            let f = format!("load_events[{k}]");
            if !(e.time >= 0.0) || !e.time.is_finite() {
                return Err(invalid(format!("{f}.time"), format!("must be finite and >= 0, got {}", e.time)));
            }
            let bus = one_based(&format!("{f}.bus"), e.bus, net.buses)?;
            crate::plant::network::validate_load_impedance(e.r, e.x).map_err(|m| invalid(&f, m))?;
            events.push(LoadEvent { time: e.time, bus, r: e.r, x: e.x });
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));

        let default_kind: ControllerKind = c.controller.kind.parse().map_err(|m: String| invalid("controller.kind", m))?;
        let controllers = match &c.controller.per_dg {
            None => vec![default_kind; n],
            Some(list) if list.len() == n => list
                .iter()
                .enumerate()
                .map(|(k, s)| s.parse().map_err(|m: String| invalid(format!("controller.per_dg[{k}]"), m)))
                .collect::<Result<_, _>>()?,
            Some(list) => return Err(invalid("controller.per_dg", format!("{} entries for {n} DGs", list.len()))),
        };

        let mut model = None;
        if controllers.contains(&ControllerKind::Ann) {
            let path = c.controller.model.as_ref().ok_or_else(|| {
                invalid("controller.model", "an `ann` controller needs a model file (set controller.model or pass --model)")
            })?;
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            if !path.is_file() {
                return Err(invalid("controller.model", format!("model file {} does not exist", path.display())));
            }
            model = Some(ModelBundle::load(&path)?);
            config.controller.model = Some(path);
        }

        let steps_per_second = whole_ratio(1.0, config.dt).map(|k| k as f64);
        let refs = References { voltage: config.references.voltage, frequency: config.references.frequency };
        let mut s = Self {
            config,
            grid,
            graph,
            channels,
            attacks,
            events,
            refs,
            gains,
            controllers,
            model: None,
            sample_every,
            steps,
            steps_per_second,
        };
        if let Some(m) = model {
            s.install_model(m)?;
        }
        Ok(s)
    }

    fn install_model(&mut self, bundle: ModelBundle) -> Result<(), ScenarioError> {
        for (i, kind) in self.controllers.iter().enumerate() {
            if *kind == ControllerKind::Ann {
                self.ann_controller(i, &bundle)?;
            }
        }
        self.model = Some(bundle);
        Ok(())
    }

    /// Switches every DG's voltage controller to the network in `bundle`.
    pub fn with_model(mut self, bundle: ModelBundle) -> Result<Self, ScenarioError> {
        self.controllers = vec![ControllerKind::Ann; self.dg_count()];
        self.config.controller.kind = "ann".into();
        self.config.controller.per_dg = None;
        self.install_model(bundle)?;
        Ok(self)
    }

    /// Switches every DG back to the baseline controller.
    pub fn with_baseline(mut self) -> Self {
        self.controllers = vec![ControllerKind::Pi; self.dg_count()];
        self.config.controller.kind = "pi".into();
        self.config.controller.per_dg = None;
        self.config.controller.model = None;
        self.model = None;
        self
    }

    pub(crate) fn ann_controller(&self, dg: usize, bundle: &ModelBundle) -> Result<AnnController, ScenarioError> {
        let net = bundle
            .networks
            .get(&dg)
            .ok_or_else(|| invalid("controller.model", format!("model has no network for dg{}", dg + 1)))?;
        let nbrs = self.graph.in_neighbors(dg).count();
        Ok(AnnController::new(dg, net.clone(), nbrs)?)
    }

    pub fn dg_count(&self) -> usize {
        self.grid.dg_count()
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Simulation time at integrator step `k`, computed without accumulation
    /// so sample instants land exactly on decimal times.
    pub fn time_at(&self, k: usize) -> f64 {
        match self.steps_per_second {
            Some(r) => k as f64 / r,
            None => k as f64 * self.config.dt,
        }
    }

    pub fn attack_labels(&self) -> Vec<String> {
        self.config
            .attacks
            .iter()
            .map(|a| {
                let mut s = format!("{} {} tau={}", a.target, a.kind, a.tau);
                for (k, v) in [("alpha", a.alpha), ("beta", a.beta), ("omega", a.omega), ("end", a.end)] {
                    if let Some(v) = v {
                        s.push_str(&format!(" {k}={v}"));
                    }
                }
                s
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_scenarios_validate() {
        for name in ScenarioConfig::embedded_names() {
            let s = Scenario::load(name).unwrap();
            assert_eq!(s.dg_count(), 4);
            assert_eq!(s.sample_every, 10);
            assert_eq!(s.steps, 40_000);
        }
        let np = Scenario::load("default-nonperiodic").unwrap();
        assert_eq!(np.attacks.len(), 1);
        assert_eq!(np.attacks[0].kind, AttackKind::NonPeriodic { alpha: 0.5 });
        assert_eq!(np.attacks[0].start, 2.0);
        let p = Scenario::load("default-periodic").unwrap();
        assert_eq!(p.attacks[0].kind, AttackKind::Periodic { beta: 0.5, omega: NOMINAL_FREQUENCY });
    }

    #[test]
    fn empty_file_is_the_default_feeder() {
        let s = Scenario::from_config(ScenarioConfig::from_toml("").unwrap(), None).unwrap();
        assert_eq!(s.graph, CommGraph::ring(4).unwrap());
        assert_eq!(s.grid.network(), &default_network());
        assert_eq!(s.time_at(20_000), 2.0);
        assert_eq!(s.time_at(3), 0.0003);
    }

    fn err(text: &str) -> String {
        match ScenarioConfig::from_toml(text).and_then(|c| Scenario::from_config(c, None)) {
            Ok(_) => panic!("accepted:\n{text}"),
            Err(e) => e.to_string(),
        }
    }

    #[test]
    fn rejects_bad_configs_with_field_names() {
        assert!(err("[[attacks]]\ntarget = \"dg1.voltage -> dg3\"\nkind = \"nonperiodic\"\nalpha = 0.5\ntau = 2.0\n")
            .contains("attacks[0].target"));
        assert!(err("[controller]\nkind = \"ann\"\n").contains("controller.model"));
        assert!(err("[controller]\nkind = \"ann\"\nmodel = \"/nonexistent/model.txt\"\n").contains("does not exist"));
        assert!(err("[controller]\nkind = \"pid\"\n").contains("controller.kind"));
        assert!(err("sample_period = 5e-5\n").contains("below the integrator step"));
        assert!(err("sample_period = 1.5e-4\n").contains("whole multiple"));
        assert!(err("frobnicate = 1\n").contains("frobnicate"));
        assert!(err("[[attacks]]\ntarget = \"dg1.voltage -> broadcast\"\nkind = \"periodic\"\nbeta = 0.5\ntau = 2.0\n")
            .contains("attacks[0].omega"));
        assert!(err("[[load_events]]\ntime = 1.0\nbus = 9\nr = 1.0\nx = 0.1\n").contains("load_events[0].bus"));
        assert!(err("[graph]\npinning = [0.0, 0.0, 0.0, 0.0]\n").contains("pinned"));
        assert!(err("[[attacks]]\ntarget = \"dg9.voltage -> broadcast\"\nkind = \"nonperiodic\"\nalpha = 0.5\ntau = 2.0\n")
            .contains("dg9"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::embedded("default-periodic").unwrap();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
