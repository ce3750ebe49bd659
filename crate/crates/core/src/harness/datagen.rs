//! Training-data generation over a load-step by attack-case matrix, and the
//! offline training pipeline that turns the recorded runs into a model bundle.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ann::{build_dataset, train, AnnError, DatasetOptions, ModelBundle, RecordedRun, TrainConfig, TrainReport};

use super::scenario::{AttackConfig, LoadEventConfig, Scenario, ScenarioConfig, ScenarioError};
use super::sim::{run_scenario, RunOutcome};
use super::trace::{Trace, TraceError};

const DEFAULT_MATRIX: &str = include_str!("../../scenarios/matrix.toml");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace {path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("dg{dg}: {source}", dg = .dg + 1)]
    Ann { dg: usize, source: AnnError },
    #[error("{0}")]
    Invalid(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    /// `none`, `nonperiodic` or `periodic`.
    pub kind: String,
    pub target: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub omega: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Scenario file or embedded name the runs start from.
    pub base: String,
    pub duration: f64,
    /// Load power multipliers applied to every load at `load_step_time`.
    pub load_levels: Vec<f64>,
    pub load_step_time: f64,
    pub cases: Vec<CaseConfig>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_MATRIX).expect("embedded matrix parses")
    }
}

/// One cell of the matrix, ready to run.
#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub id: String,
    pub load_level: f64,
    pub case: String,
    pub attacked: bool,
    /// Id of the attack-free run at the same load level.
    pub clean_run: String,
    pub scenario: Scenario,
}

fn run_id(level: f64, case: &str) -> String {
    format!("load{level:.2}-{case}")
}

impl MatrixConfig {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io(path))?)
    }

    /// Expands the matrix into validated scenarios, load level major.
    pub fn runs(&self, base_dir: Option<&Path>) -> Result<Vec<MatrixRun>, DataError> {
        let base = match base_dir.map(|d| d.join(&self.base)).filter(|p| p.is_file()) {
            Some(p) => Scenario::load(&p.to_string_lossy())?,
            None => Scenario::load(&self.base)?,
        }
        .with_baseline();
        if self.load_levels.is_empty() || self.cases.is_empty() {
            return Err(DataError::Invalid("matrix needs at least one load level and one case".into()));
        }
        if let Some(l) = self.load_levels.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(DataError::Invalid(format!("load level {l} must be positive")));
        }
        let clean: Vec<&CaseConfig> = self.cases.iter().filter(|c| c.kind == "none").collect();
        if clean.len() != 1 {
            return Err(DataError::Invalid(format!("matrix needs exactly one case of kind `none`, found {}", clean.len())));
        }
        let mut names: Vec<&str> = self.cases.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::Invalid("case names must be unique".into()));
        }

        let mut out = Vec::new();
        for &level in &self.load_levels {
            for case in &self.cases {
                let mut cfg: ScenarioConfig = base.config.clone();
                cfg.name = run_id(level, &case.name);
                cfg.duration = self.duration;
                cfg.attacks.clear();
                cfg.load_events.retain(|e| e.time < self.load_step_time);
                for ld in &base.config.network.loads {
                    cfg.load_events.push(LoadEventConfig { time: self.load_step_time, bus: ld.bus, r: ld.r / level, x: ld.x / level });
                }
                let attacked = case.kind != "none";
                if attacked {
                    let field = |v: Option<f64>, n: &str| {
                        v.ok_or_else(|| DataError::Invalid(format!("case `{}` needs `{n}`", case.name)))
                    };
                    cfg.attacks.push(AttackConfig {
                        target: case
                            .target
                            .clone()
                            .ok_or_else(|| DataError::Invalid(format!("case `{}` needs `target`", case.name)))?,
                        kind: case.kind.clone(),
                        alpha: case.alpha,
                        beta: case.beta,
                        omega: case.omega,
                        tau: field(case.tau, "tau")?,
                        end: None,
                    });
                }
                let scenario = Scenario::from_config(cfg, None)?;
                out.push(MatrixRun {
                    id: run_id(level, &case.name),
                    load_level: level,
                    case: case.name.clone(),
                    attacked,
                    clean_run: run_id(level, &clean[0].name),
                    scenario,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: Option<String>,
    pub load_level: f64,
    pub case: String,
    pub attacked: bool,
    pub clean_run: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub v_ref: f64,
    pub dg_count: usize,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, DataError> {
        let p = dir.join(MANIFEST);
        Ok(serde_json::from_str(&fs::read_to_string(&p).map_err(io(&p))?)?)
    }
}

/// A finished run held in memory.
#[derive(Debug, Clone)]
pub struct GeneratedRun {
    pub entry: ManifestEntry,
    pub trace: Option<Trace>,
}

fn entry(run: &MatrixRun, result: &Result<RunOutcome, String>) -> ManifestEntry {
    let (status, message, samples) = match result {
        Ok(o) => match &o.diverged {
            None => (RunStatus::Ok, None, o.trace.len()),
            Some(d) => (RunStatus::Diverged, Some(format!("diverged at t={}: {}", d.t, d.reason)), o.trace.len()),
        },
        Err(e) => (RunStatus::Failed, Some(e.clone()), 0),
    };
    ManifestEntry {
        id: run.id.clone(),
        file: None,
        load_level: run.load_level,
        case: run.case.clone(),
        attacked: run.attacked,
        clean_run: run.clean_run.clone(),
        status,
        message,
        samples,
    }
}

fn execute(run: &MatrixRun) -> GeneratedRun {
    let result = run_scenario(&run.scenario).map_err(|e| e.to_string());
    let entry = entry(run, &result);
    GeneratedRun { entry, trace: result.ok().map(|o| o.trace) }
}

/// Runs every cell of the matrix in memory. Run failures are recorded, not raised.
pub fn gen_data(matrix: &MatrixConfig, base_dir: Option<&Path>) -> Result<(Manifest, Vec<GeneratedRun>), DataError> {
    let runs = matrix.runs(base_dir)?;
    let first = &runs[0].scenario;
    let mut manifest = Manifest { v_ref: first.refs.voltage, dg_count: first.dg_count(), runs: Vec::new() };
    let generated: Vec<GeneratedRun> = runs.iter().map(execute).collect();
    manifest.runs = generated.iter().map(|g| g.entry.clone()).collect();
    Ok((manifest, generated))
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<(), DataError>) -> Result<(), DataError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    write(&mut f)?;
    f.sync_all().map_err(io(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io(path))
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), DataError> {
    let p = dir.join(MANIFEST);
    write_atomic(&p, |f| {
        serde_json::to_writer_pretty(&mut *f, m)?;
        use std::io::Write;
        writeln!(f).map_err(io(&p))
    })
}

/// Runs the matrix, writing each trace as soon as it finishes and rewriting
/// the manifest after every run so an interrupted job leaves usable output.
pub fn gen_data_to_dir(matrix: &MatrixConfig, base_dir: Option<&Path>, out: &Path) -> Result<Manifest, DataError> {
    let runs = matrix.runs(base_dir)?;
    fs::create_dir_all(out).map_err(io(out))?;
    let first = &runs[0].scenario;
    let mut manifest = Manifest { v_ref: first.refs.voltage, dg_count: first.dg_count(), runs: Vec::new() };
    for run in &runs {
        let mut g = execute(run);
        if let Some(trace) = &g.trace {
            let name = format!("{}.csv", run.id);
            let path = out.join(&name);
            write_atomic(&path, |f| trace.write_csv(f).map_err(|e| DataError::Trace { path: path.clone(), source: e }))?;
            g.entry.file = Some(name);
        }
        manifest.runs.push(g.entry);
        write_manifest(out, &manifest)?;
    }
    Ok(manifest)
}

/// Reads back every successful run listed in a data directory's manifest.
pub fn load_data_dir(dir: &Path) -> Result<(Manifest, Vec<GeneratedRun>), DataError> {
    let manifest = Manifest::load(dir)?;
    let mut runs = Vec::new();
    for e in &manifest.runs {
        let trace = match (&e.status, &e.file) {
            (RunStatus::Ok, Some(f)) => {
                let p = dir.join(f);
                let file = fs::File::open(&p).map_err(io(&p))?;
                Some(Trace::read_csv(std::io::BufReader::new(file)).map_err(|source| DataError::Trace { path: p, source })?)
            }
            _ => None,
        };
        runs.push(GeneratedRun { entry: e.clone(), trace });
    }
    Ok((manifest, runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSettings {
    pub discard_before: f64,
    pub duplicate_received: bool,
}

impl Default for DatasetSettings {
    fn default() -> Self {
        let d = DatasetOptions::default();
        Self { discard_before: d.discard_before, duplicate_received: d.duplicate_received }
    }
}

impl From<&DatasetSettings> for DatasetOptions {
    fn from(s: &DatasetSettings) -> Self {
        Self { discard_before: s.discard_before, duplicate_received: s.duplicate_received }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub train: TrainConfig,
    pub dataset: DatasetSettings,
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_toml(&fs::read_to_string(path).map_err(io(path))?)
    }
}

/// Trains one network per DG from recorded runs. Attacked runs whose clean
/// partner is missing or failed are skipped.
pub fn train_bundle(
    manifest: &Manifest,
    runs: &[GeneratedRun],
    config: &TrainingConfig,
) -> Result<(ModelBundle, Vec<TrainReport>), DataError> {
    let find = |id: &str| runs.iter().find(|r| r.entry.id == id).and_then(|r| r.trace.as_ref());
    let recorded: Vec<RecordedRun<'_>> = runs
        .iter()
        .filter_map(|r| {
            let trace = r.trace.as_ref()?;
            let clean = if r.entry.attacked { find(&r.entry.clean_run)? } else { trace };
            Some(RecordedRun { id: &r.entry.id, trace, clean, attacked: r.entry.attacked })
        })
        .collect();
    if recorded.is_empty() {
        return Err(DataError::Invalid("no usable runs in the data set".into()));
    }
    let opts = DatasetOptions::from(&config.dataset);
    let mut bundle = ModelBundle::default();
    let mut reports = Vec::with_capacity(manifest.dg_count);
    for dg in 0..manifest.dg_count {
        let ds = build_dataset(&recorded, dg, manifest.v_ref, opts).map_err(|source| DataError::Ann { dg, source })?;
        let (net, report) = train(&ds, &config.train).map_err(|source| DataError::Ann { dg, source })?;
        bundle.networks.insert(dg, net);
        reports.push(report);
    }
    Ok((bundle, reports))
}
