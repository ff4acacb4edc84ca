use std::collections::BTreeMap;

use fmsim::fms::transitions;
use fmsim::mes::DispatchPolicy;
use fmsim::metrics::{
    busy_intervals, compute_kpis, compute_repeatability, read_rows, rows, run_once, run_scenario, verdicts,
    write_csv, write_json, ControllerKind, MetricsError, Row, Scenario, ScenarioConfig,
};
use fmsim::petri::{EventKind, SimEvent, Value};

fn util(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn small(scenario: Scenario, controller: ControllerKind, orders: u32) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(scenario, controller);
    c.base.order_count = orders;
    c
}

#[test]
fn repeatability_oracles() {
    let (a, b) = (util(&[("CNC", 50.0)]), util(&[("CNC", 60.0)]));
    assert_eq!(compute_repeatability(&[&a, &b]).unwrap(), 5.0);
    assert_eq!(compute_repeatability(&[&a, &a, &a]).unwrap(), 0.0);
    // standard deviations 4 and 6
    let x = util(&[("CNC", 46.0), ("ROBOT", 44.0)]);
    let y = util(&[("CNC", 54.0), ("ROBOT", 56.0)]);
    assert_eq!(compute_repeatability(&[&x, &y]).unwrap(), 5.0);
    assert_eq!(compute_repeatability(&[&a]), Err(MetricsError::InsufficientRuns(1)));
    assert_eq!(compute_repeatability(&[]), Err(MetricsError::InsufficientRuns(0)));
}

fn ev(seq: u64, time: u64, kind: EventKind, transition: Option<&str>, payload: Value) -> SimEvent {
    SimEvent {
        time,
        seq,
        kind,
        transition: transition.map(String::from),
        payload,
    }
}

fn token(place: &str, color: &str, at: u64) -> Value {
    Value::record([
        ("place", Value::str(place)),
        ("color", Value::str(color)),
        ("at", Value::Int(at as i64)),
    ])
}

fn store(order: i64) -> Value {
    Value::record([("order", Value::Int(order)), ("obj", Value::str("ROBOT"))])
}

#[test]
fn kpis_of_a_hand_built_trace() {
    let events = vec![
        ev(0, 0, EventKind::TokenConsumed, None, token("cnc_idle", "CNC", 0)),
        ev(1, 50_000, EventKind::TokenCreated, None, token("cnc_idle", "CNC", 50_000)),
        ev(2, 100_000, EventKind::Fire, Some(transitions::STORE), store(1)),
        ev(3, 150_000, EventKind::TokenConsumed, None, token("transport_idle", "ROBOT", 150_000)),
        ev(4, 200_000, EventKind::Fire, Some(transitions::STORE), store(2)),
    ];
    let resources = vec!["CNC".to_string(), "ROBOT".to_string(), "CONVEYOR".to_string()];
    let k = compute_kpis(&events, 3, &resources);
    assert_eq!(k.orders_completed, 2);
    assert_eq!(k.makespan, 200_000);
    assert_eq!(k.lead_times, BTreeMap::from([(1, 100_000), (2, 200_000)]));
    assert_eq!(k.lead_time_mean, Some(150_000.0));
    assert_eq!(k.throughput, 36.0);
    assert_eq!(k.incomplete, vec![3]);
    // the robot never came back: closed at the makespan
    assert_eq!(k.utilization, util(&[("CNC", 25.0), ("ROBOT", 25.0), ("CONVEYOR", 0.0)]));
}

#[test]
fn empty_trace_has_no_throughput() {
    let k = compute_kpis(&[], 0, &["CNC".to_string()]);
    assert_eq!(k.throughput, 0.0);
    assert_eq!(k.lead_time_mean, None);
    assert_eq!(k.makespan, 0);
    assert_eq!(k.utilization, util(&[("CNC", 0.0)]));
}

#[test]
fn zero_orders_give_empty_kpis() {
    for c in ControllerKind::ALL {
        let r = run_once(&small(Scenario::A, c, 0), 1).unwrap();
        assert_eq!(r.kpis.orders_completed, 0);
        assert_eq!(r.kpis.throughput, 0.0);
        assert!(r.kpis.lead_times.is_empty());
    }
}

#[test]
fn single_order_lead_times() {
    let mut c = small(Scenario::A, ControllerKind::Agents, 1);
    c.policy = DispatchPolicy::Sequential;
    assert_eq!(run_once(&c, 1).unwrap().kpis.lead_time_mean, Some(101_000.0));
    let agents = run_once(&small(Scenario::A, ControllerKind::Agents, 1), 1).unwrap();
    let conventional = run_once(&small(Scenario::A, ControllerKind::Conventional, 1), 1).unwrap();
    assert_eq!(agents.kpis.lead_time_mean, Some(69_000.0));
    assert_eq!(conventional.kpis.lead_time_mean, Some(69_000.0));
}

#[test]
fn kpi_identities_hold_on_real_runs() {
    for s in Scenario::ALL {
        for c in ControllerKind::ALL {
            let r = run_once(&small(s, c, 30), 3).unwrap();
            let k = &r.kpis;
            assert_eq!(k.orders_completed, 30, "{s} {c}");
            assert!(k.incomplete.is_empty());
            let back = k.throughput * k.makespan as f64 / 3_600_000.0;
            assert!((back - 30.0).abs() < 1e-9, "{s} {c}: {back}");
            for (res, list) in busy_intervals(&r.trace.events, k.makespan) {
                for w in list.windows(2) {
                    assert!(w[0].1 <= w[1].0, "{s} {c} {res}: {w:?}");
                }
                for (a, b) in list {
                    assert!(a <= b);
                }
            }
            for u in k.utilization.values() {
                assert!((0.0..=100.0).contains(u));
            }
            assert!(r.audit.is_empty(), "{s} {c}: {:?}", r.audit);
            assert!(r.violations.is_empty(), "{s} {c}: {:?}", r.violations);
        }
    }
}

#[test]
fn conventional_holds_retrieval_until_the_previous_order_is_machined() {
    let r = run_once(&small(Scenario::A, ControllerKind::Conventional, 4), 1).unwrap();
    let fires = |t: &str| -> Vec<(u64, i64)> {
        r.trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Fire && e.transition.as_deref() == Some(t))
            .map(|e| (e.time, e.payload.field("order").and_then(Value::as_int).unwrap()))
            .collect()
    };
    let retrieved = fires(transitions::RETRIEVE);
    let machined = fires(transitions::CNC_DONE);
    for order in 2..=4 {
        let first_out = retrieved.iter().filter(|f| f.1 == order).map(|f| f.0).min().unwrap();
        let prev_done = machined.iter().filter(|f| f.1 == order - 1).map(|f| f.0).max().unwrap();
        assert!(first_out >= prev_done, "order {order}");
    }
}

#[test]
fn failures_slow_both_controllers() {
    for c in ControllerKind::ALL {
        let a = run_once(&small(Scenario::A, c, 40), 2).unwrap();
        let b = run_once(&small(Scenario::B, c, 40), 2).unwrap();
        assert!(b.stats.failures > 0);
        assert_eq!(b.kpis.orders_completed, 40);
        assert!(b.kpis.makespan > a.kpis.makespan, "{c}");
        assert_eq!(a.stats.failures, 0);
    }
}

fn grid() -> Vec<Row> {
    let mut results = Vec::new();
    for s in Scenario::ALL {
        for c in ControllerKind::ALL {
            let mut cfg = small(s, c, 6);
            cfg.runs = 3;
            results.extend(run_scenario(&cfg).unwrap());
        }
    }
    rows(&results)
}

#[test]
fn rows_cover_the_grid_and_round_trip() {
    let rows = grid();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert_eq!(r.repair_time_ms, (r.scenario == "B").then_some(30_000), "{r:?}");
        assert!(r.repeatability.is_some());
        assert_eq!(r.orders_completed, 6);
    }
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).unwrap();
    assert_eq!(read_rows(csv.as_slice()).unwrap(), rows);
    let mut again = Vec::new();
    write_csv(&grid(), &mut again).unwrap();
    assert_eq!(csv, again);
    let mut json = Vec::new();
    write_json(&rows, &mut json).unwrap();
    let back: Vec<Row> = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, rows);
    let header = String::from_utf8(csv).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("scenario,controller,seed,lead_time_mean_ms,throughput_per_hour,repeatability,util_"));
    assert!(header.ends_with("makespan_ms,repair_time_ms,orders_completed"));
    assert_eq!(verdicts(&rows).len(), 4);
}

#[test]
fn verdicts_need_both_sides() {
    let rows: Vec<Row> = grid().into_iter().filter(|r| r.controller == "agents").collect();
    let v = verdicts(&rows);
    assert_eq!(v[0].holds, None);
    assert_eq!(v[1].holds, None);
    assert!(v[2].holds.is_some());
    assert_eq!(v[3].holds, None);
}

#[test]
fn config_text_round_trips() {
    let mut c = small(Scenario::B, ControllerKind::Conventional, 12);
    c.seeds = vec![7, 8, 9];
    c.runs = 2;
    c.repair_time = 12_000;
    c.base.transport_resources = vec!["agv-1".into()];
    let back = ScenarioConfig::from_config_text(&c.to_config_text()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ScenarioConfig::from_config_text("colour = red\n").is_err());
    assert!(ScenarioConfig::from_config_text("failure.probability = 0.3\n").is_err());
    assert!(ScenarioConfig::from_config_text("scenario = C\n").is_err());
    assert!(ScenarioConfig::from_config_text("runs = 0\n").is_err());
    assert!(ScenarioConfig::from_config_text("seeds = 1, 1\nruns = 2\n").is_err());
    assert!(ScenarioConfig::from_config_text("runs = 6\n").is_err());
    let mut c = small(Scenario::A, ControllerKind::Agents, 1);
    c.runs = 0;
    assert!(run_scenario(&c).is_err());
}

#[test]
fn scenario_a_runs_are_identical_across_seeds() {
    let mut c = small(Scenario::A, ControllerKind::Agents, 10);
    c.runs = 3;
    let runs = run_scenario(&c).unwrap();
    let utils: Vec<_> = runs.iter().map(|r| &r.kpis.utilization).collect();
    assert_eq!(compute_repeatability(&utils).unwrap(), 0.0);
    assert!(runs.iter().all(|r| r.kpis == runs[0].kpis));
}
