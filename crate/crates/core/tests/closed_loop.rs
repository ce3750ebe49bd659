use microgrid_core::harness::scenario::{LoadEventConfig, NOMINAL_FREQUENCY};
use microgrid_core::harness::{run_scenario, Scenario, ScenarioConfig};
use microgrid_core::plant::{default_network, DgParams, Microgrid, SetPoints};

fn scenario(name: &str) -> Scenario {
    Scenario::load(name).unwrap()
}

#[test]
fn baseline_regulates_voltage_within_one_second() {
    let out = run_scenario(&scenario("default")).unwrap();
    assert!(out.diverged.is_none());
    for r in out.trace.records.iter().filter(|r| r.t >= 1.0) {
        for &v in &r.voltage {
            assert!((v - 1.0).abs() < 0.005, "t={} v={v}", r.t);
        }
        for &w in &r.frequency {
            assert!((w - NOMINAL_FREQUENCY).abs() / NOMINAL_FREQUENCY < 1e-3);
        }
    }
    assert!(out.max_balance_residual < 1e-9);
}

#[test]
fn steady_state_shares_active_power_by_droop() {
    // the sharing mode is the slowest in the loop, so give it time to settle
    let mut cfg = ScenarioConfig::embedded("default").unwrap();
    cfg.duration = 10.0;
    let out = run_scenario(&Scenario::from_config(cfg, None).unwrap()).unwrap();
    let last = out.trace.records.last().unwrap();
    let mp = DgParams::default().m_p;
    let shares: Vec<f64> = last.p.iter().map(|p| mp * p).collect();
    let spread = shares.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - shares.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-3, "m_P P spread {spread}");
}

#[test]
fn frozen_secondary_reaches_steady_state() {
    let grid = Microgrid::new(vec![DgParams::default(); 4], default_network(), NOMINAL_FREQUENCY, 10.0).unwrap();
    let sp = SetPoints::uniform(4, 1.0, NOMINAL_FREQUENCY);
    let mut s = grid.initial_state(1.0, NOMINAL_FREQUENCY);
    for _ in 0..20_000 {
        s = grid.step(&s, &sp, 1e-4).unwrap();
    }
    let out = grid.evaluate(&s).unwrap();
    assert!(grid.max_derivative(&s, &out) < 1e-6);
}

#[test]
fn runs_are_byte_identical() {
    let s = scenario("default-periodic");
    let a = run_scenario(&s).unwrap().trace.to_csv_string();
    let b = run_scenario(&s).unwrap().trace.to_csv_string();
    assert!(a == b);
}

#[test]
fn attack_flag_rises_at_first_sample_after_tau() {
    let out = run_scenario(&scenario("default-nonperiodic")).unwrap();
    let k = out.trace.records.iter().position(|r| r.attack_active).unwrap();
    assert_eq!(out.trace.records[k].t, 2.0);
    assert!(out.trace.records[k..].iter().all(|r| r.attack_active));
    assert!(out.trace.records[..k].iter().all(|r| !r.attack_active && r.clean == r.received));
    // DG1's broadcast value arrives scaled by 1.5 everywhere it is sent
    let s = scenario("default-nonperiodic");
    let r = &out.trace.records[k + 10];
    for (i, id) in s.channels.ids().iter().enumerate() {
        let src_dg1_voltage = id.to_string().starts_with("dg1->") && id.to_string().ends_with("voltage");
        if src_dg1_voltage {
            assert!((r.received[i] - 1.5 * r.clean[i]).abs() < 1e-15);
        } else {
            assert_eq!(r.received[i], r.clean[i]);
        }
    }
}

#[test]
fn baseline_is_pulled_off_reference_by_nonperiodic_attack() {
    let out = run_scenario(&scenario("default-nonperiodic")).unwrap();
    let last = out.trace.records.last().unwrap();
    assert!(last.voltage.iter().any(|v| (v - 1.0).abs() > 0.01));
    assert!(out.max_balance_residual < 1e-9);
}

fn with_loads(mut cfg: ScenarioConfig, factor: f64, at: Option<f64>) -> Scenario {
    match at {
        Some(t) => {
            for ld in cfg.network.loads.clone() {
                cfg.load_events.push(LoadEventConfig { time: t, bus: ld.bus, r: ld.r / factor, x: ld.x / factor });
            }
        }
        None => {
            for ld in &mut cfg.network.loads {
                ld.r /= factor;
                ld.x /= factor;
            }
        }
    }
    Scenario::from_config(cfg, None).unwrap()
}

#[test]
fn load_step_matches_fresh_start_with_new_load() {
    let mut cfg = ScenarioConfig::embedded("default").unwrap();
    cfg.duration = 15.0;
    let stepped = run_scenario(&with_loads(cfg.clone(), 1.2, Some(1.0))).unwrap();
    let fresh = run_scenario(&with_loads(cfg, 1.2, None)).unwrap();
    let (a, b) = (stepped.trace.records.last().unwrap(), fresh.trace.records.last().unwrap());
    for i in 0..4 {
        assert!((a.voltage[i] - b.voltage[i]).abs() < 1e-6, "v{i}: {} vs {}", a.voltage[i], b.voltage[i]);
        assert!((a.p[i] - b.p[i]).abs() < 1e-6, "P{i}: {} vs {}", a.p[i], b.p[i]);
        assert!((a.frequency[i] - b.frequency[i]).abs() < 1e-6);
    }
}

#[test]
fn identical_load_event_changes_nothing() {
    let cfg = ScenarioConfig::embedded("default").unwrap();
    let base = run_scenario(&Scenario::from_config(cfg.clone(), None).unwrap()).unwrap();
    let same = run_scenario(&with_loads(cfg, 1.0, Some(0.0))).unwrap();
    assert_eq!(base.trace, same.trace);
}

#[test]
fn divergence_is_reported_not_raised() {
    let mut cfg = ScenarioConfig::embedded("default-nonperiodic").unwrap();
    cfg.attacks[0].alpha = Some(-3.0);
    cfg.divergence_bound = 2.0;
    let out = run_scenario(&Scenario::from_config(cfg, None).unwrap()).unwrap();
    let d = out.diverged.expect("run should diverge");
    assert!(d.t > 2.0 && d.t < 4.0, "diverged at {}", d.t);
    assert!(out.trace.records.last().unwrap().t < d.t);
}
