use std::fs;
use std::process::Command;

use microgrid_core::ann::{build_dataset, DatasetOptions, RecordedRun};
use microgrid_core::harness::compare::CompareError;
use microgrid_core::harness::datagen::{gen_data, gen_data_to_dir, load_data_dir, MatrixConfig, RunStatus};
use microgrid_core::harness::metrics::MetricsError;
use microgrid_core::harness::scenario::NOMINAL_FREQUENCY;
use microgrid_core::harness::{compare, compute_metrics, run_scenario, LabeledRun, Scenario, ScenarioConfig, Trace};
use microgrid_core::secondary::References;

const REFS: References = References { voltage: 1.0, frequency: NOMINAL_FREQUENCY };

fn short_default(duration: f64) -> Trace {
    let mut cfg = ScenarioConfig::embedded("default").unwrap();
    cfg.duration = duration;
    run_scenario(&Scenario::from_config(cfg, None).unwrap()).unwrap().trace
}

/// Replaces every DG's voltage with `v(t)` and every frequency with nominal.
fn synthetic(duration: f64, onset: Option<f64>, v: impl Fn(f64) -> f64) -> Trace {
    let mut tr = short_default(duration);
    for r in &mut tr.records {
        r.voltage.iter_mut().for_each(|x| *x = v(r.t));
        r.frequency.iter_mut().for_each(|w| *w = NOMINAL_FREQUENCY);
        r.attack_active = onset.is_some_and(|o| r.t >= o);
    }
    tr
}

#[test]
fn perfect_regulation_scores_zero() {
    let tr = synthetic(2.0, None, |_| 1.0);
    let m = compute_metrics(&tr, REFS, 0, None).unwrap();
    assert!(m.eps_v.iter().all(|&e| e == 0.0));
    assert_eq!(m.post_eps_mean, 0.0);
    assert_eq!(m.post_ripple, 0.0);
    assert_eq!(m.settling_time, Some(0.0));
    assert_eq!(m.max_steady_voltage_error_pct(), 0.0);
    assert!(m.steady_frequency_error_hz.iter().all(|&f| f == 0.0));
    assert!(!m.diverged);
}

#[test]
fn voltage_step_at_onset() {
    let tr = synthetic(4.0, Some(2.0), |t| if t >= 2.0 { 1.03 } else { 1.0 });
    let m = compute_metrics(&tr, REFS, 0, None).unwrap();
    assert_eq!(m.attack_onset, Some(2.0));
    assert_eq!(m.post_window_start, 2.5);
    assert!((m.post_max_error_pct - 3.0).abs() < 1e-9);
    assert!((m.post_eps_mean - 0.03).abs() < 1e-12);
    assert!(m.post_ripple.abs() < 1e-15);
    assert!(m.steady_voltage_error_pct.iter().all(|e| (e - 3.0).abs() < 1e-9));
    // outside the 2% band at the last sample
    assert_eq!(m.settling_time, None);

    let tr = synthetic(4.0, Some(2.0), |t| if (2.0..2.3).contains(&t) { 1.05 } else { 1.0 });
    let m = compute_metrics(&tr, REFS, 0, None).unwrap();
    assert!((m.settling_time.unwrap() - 0.3).abs() < 1e-9);
}

#[test]
fn ripple_of_a_sinusoid() {
    let tr = synthetic(4.0, Some(2.0), |t| if t >= 2.0 { 1.0 + 0.01 * (2.0 * std::f64::consts::PI * 10.0 * t).sin() } else { 1.0 });
    let m = compute_metrics(&tr, REFS, 0, None).unwrap();
    assert!((m.post_ripple - 0.01).abs() < 1e-6, "{}", m.post_ripple);
    assert!((m.post_max_error_pct - 1.0).abs() < 1e-6);
    // mean of |sin| is 2/pi
    assert!((m.post_eps_mean - 0.02 / std::f64::consts::PI).abs() < 1e-5);
}

#[test]
fn metrics_errors() {
    let tr = short_default(0.3);
    assert!(matches!(compute_metrics(&tr, REFS, 0, None), Err(MetricsError::Window { .. })));
    let tr = short_default(1.0);
    assert!(matches!(compute_metrics(&tr, REFS, 4, None), Err(MetricsError::NoSuchDg(4))));
    let mut empty = tr.clone();
    empty.records.clear();
    assert!(matches!(compute_metrics(&empty, REFS, 0, None), Err(MetricsError::Empty)));
}

#[test]
fn metrics_agree_with_csv_recomputation() {
    let out = run_scenario(&Scenario::load("default-periodic").unwrap()).unwrap();
    let csv = out.trace.to_csv_string();
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    let header = rd.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (ct, cv, ca) = (col("t"), col("dg1.v"), col("attack_active"));
    let rows: Vec<(f64, f64, bool)> = rd
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[ct].parse().unwrap(), r[cv].parse().unwrap(), r[ca].trim() == "1" || r[ca].trim() == "true")
        })
        .collect();
    let onset = rows.iter().find(|r| r.2).unwrap().0;
    let post: Vec<f64> = rows.iter().filter(|r| r.0 >= onset + 0.5).map(|r| r.1).collect();
    let mean = post.iter().map(|v| (v - 1.0).abs()).sum::<f64>() / post.len() as f64;
    let hi = post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = post.iter().cloned().fold(f64::INFINITY, f64::min);

    let m = compute_metrics(&out.trace, REFS, 0, None).unwrap();
    assert_eq!(m.attack_onset, Some(onset));
    assert!((m.post_eps_mean - mean).abs() < 1e-12);
    assert!((m.post_ripple - (hi - lo) / 2.0).abs() < 1e-12);
}

#[test]
fn compare_identical_and_mismatched_runs() {
    let s = Scenario::load("default-nonperiodic").unwrap();
    let out = run_scenario(&s).unwrap();
    let id = s.identity();
    let run = || LabeledRun { identity: &id, trace: &out.trace, diverged_at: None };
    let rep = compare(run(), run(), s.refs, 0).unwrap();
    assert_eq!(rep.deltas.post_eps_mean, 0.0);
    assert_eq!(rep.deltas.post_ripple, 0.0);
    assert!(!rep.ann_better_mean_eps_v && !rep.ann_smaller_ripple);
    // baseline is more than 2% off under this attack
    assert!(!rep.ann_within_limits);

    let mut other = id.clone();
    other.seed += 1;
    let b = LabeledRun { identity: &other, trace: &out.trace, diverged_at: None };
    assert!(matches!(compare(run(), b, s.refs, 0), Err(CompareError::Mismatch { .. })));

    let mut shorter = out.trace.clone();
    shorter.records.pop();
    let b = LabeledRun { identity: &id, trace: &shorter, diverged_at: None };
    assert!(matches!(compare(run(), b, s.refs, 0), Err(CompareError::TimeGrid { .. })));
}

const SMALL_MATRIX: &str = r#"
base = "default"
duration = 1.0
load_levels = [0.9, 1.1]
load_step_time = 0.3

[[cases]]
name = "normal"
kind = "none"

[[cases]]
name = "np"
kind = "nonperiodic"
target = "dg1.voltage -> broadcast"
alpha = 0.5
tau = 0.6
"#;

#[test]
fn gen_data_writes_traces_and_manifest() {
    let matrix = MatrixConfig::from_toml(SMALL_MATRIX).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_data_to_dir(&matrix, None, dir.path()).unwrap();
    assert_eq!(manifest.runs.len(), 4);
    assert_eq!(manifest.dg_count, 4);
    let ids: Vec<&str> = manifest.runs.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["load0.90-normal", "load0.90-np", "load1.10-normal", "load1.10-np"]);
    assert!(manifest.runs.iter().all(|r| r.status == RunStatus::Ok && r.samples == 1000));
    // no temporary files left behind
    let mut names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    assert!(names.iter().all(|n| n.ends_with(".csv") || n == "manifest.json"));

    let (m2, runs) = load_data_dir(dir.path()).unwrap();
    assert_eq!(m2, manifest);
    let (_, mem) = gen_data(&matrix, None).unwrap();
    for (a, b) in runs.iter().zip(&mem) {
        assert_eq!(a.trace, b.trace, "{}", a.entry.id);
    }

    let attacked = runs[1].trace.as_ref().unwrap();
    assert!(attacked.records.iter().any(|r| r.clean != r.received));
    let clean = runs[0].trace.as_ref().unwrap();
    assert!(clean.records.iter().all(|r| r.clean == r.received));
    // identical up to the attack onset
    let k = attacked.records.iter().position(|r| r.attack_active).unwrap();
    assert_eq!(attacked.records[k].t, 0.6);
    assert_eq!(attacked.records[..k], clean.records[..k]);
}

#[test]
fn dataset_row_count_arithmetic() {
    let matrix = MatrixConfig::from_toml(SMALL_MATRIX).unwrap();
    let (_, runs) = gen_data(&matrix, None).unwrap();
    let tr = |i: usize| runs[i].trace.as_ref().unwrap();
    let recorded = [
        RecordedRun { id: "n", trace: tr(0), clean: tr(0), attacked: false },
        RecordedRun { id: "a", trace: tr(1), clean: tr(0), attacked: true },
    ];
    let kept = |t: &Trace| t.records.iter().filter(|r| r.t >= 0.1).count();
    let active = tr(1).records.iter().filter(|r| r.t >= 0.1 && r.attack_active).count();
    assert_eq!(active, 400);

    let plain = DatasetOptions { duplicate_received: false, ..DatasetOptions::default() };
    let ds = build_dataset(&recorded, 2, 1.0, plain).unwrap();
    assert_eq!(ds.len(), kept(tr(0)) + kept(tr(1)));
    let ds = build_dataset(&recorded, 2, 1.0, DatasetOptions::default()).unwrap();
    assert_eq!(ds.len(), kept(tr(0)) + kept(tr(1)) + active);
    assert_eq!(ds.width(), Some(7));

    // targets of the attacked run come from its clean partner
    let row = ds.rows.iter().find(|r| r.provenance.run == "a" && r.provenance.t == 0.8).unwrap();
    let clean_rec = tr(0).records.iter().find(|r| r.t == 0.8).unwrap();
    assert_eq!(row.y, clean_rec.v_nom[2]);
    assert_eq!(row.x[6], 1.0);
}

#[test]
fn matrix_validation() {
    let no_clean = SMALL_MATRIX.replace("kind = \"none\"", "kind = \"nonperiodic\"\ntarget = \"dg1.voltage -> broadcast\"\nalpha = 0.1\ntau = 0.5");
    assert!(MatrixConfig::from_toml(&no_clean).unwrap().runs(None).is_err());
    let bad_level = SMALL_MATRIX.replace("[0.9, 1.1]", "[0.0]");
    assert!(MatrixConfig::from_toml(&bad_level).unwrap().runs(None).is_err());
    assert!(MatrixConfig::from_toml("durration = 2.0").is_err());
    assert_eq!(MatrixConfig::default().runs(None).unwrap().len(), 25);
}

#[test]
fn scenario_file_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "dt = -1.0\n").unwrap();
    let err = Scenario::load(p.to_str().unwrap()).unwrap_err().to_string();
    assert!(err.contains("dt"), "{err}");
    assert!(Scenario::load("no-such-scenario").is_err());
}

fn mgsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mgsim")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let metrics = dir.path().join("m.json");
    let o = mgsim(&["simulate", "--scenario", "default", "--out", out.to_str().unwrap(), "--metrics", metrics.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let tr = Trace::read_csv(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(tr.len(), 4000);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["post_eps_mean"].as_f64().unwrap() < 0.01);

    let mut cfg = ScenarioConfig::embedded("default-nonperiodic").unwrap();
    cfg.attacks[0].alpha = Some(-3.0);
    cfg.divergence_bound = 2.0;
    let scen = dir.path().join("diverge.toml");
    fs::write(&scen, cfg.to_toml()).unwrap();
    let o = mgsim(&["simulate", "--scenario", scen.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = mgsim(&["simulate", "--scenario", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = mgsim(&["evaluate", "--scenario", "default", "--model", "/nonexistent", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = mgsim(&["graph-info", "--scenario", "default"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("dg1 receives from: dg2 (a=1), dg4 (a=1), pinned b=1"));
}
