use std::collections::BTreeSet;
use std::sync::Arc;

use fmsim::petri::{
    advance, enabled_bindings, fire, reachable_markings, run, Advance, ColorSet, EventKind,
    Expr, KernelError, Marking, Net, NetModel, NoHooks, Pattern, RunOutcome, SimRng, Simulator,
    Step, UntimedMarking, Value,
};
use proptest::prelude::*;

fn single(delay: i64, guard: Option<&str>) -> Net {
    let mut m = NetModel::new("single");
    m.place("P", ColorSet::Int)
        .place("Q", ColorSet::Int)
        .transition("T", Expr::int(delay))
        .input("P", "T", Pattern::var("x"))
        .output("T", "Q", Expr::var("x"));
    m.transition_mut("T").unwrap().guard = guard.map(|g| g.parse().unwrap());
    Net::new(m).unwrap()
}

fn with_token(net: &Net, place: &str, v: i64, ts: u64) -> Marking {
    let mut m = net.empty_marking();
    m.add(net, net.place_id(place).unwrap(), Value::Int(v), ts).unwrap();
    m
}

fn chain() -> Net {
    let mut m = NetModel::new("chain");
    m.place("P", ColorSet::Unit)
        .place("Q", ColorSet::Unit)
        .place("R", ColorSet::Unit)
        .transition("T1", Expr::int(5000))
        .transition("T2", Expr::int(3000))
        .input("P", "T1", Pattern::Any)
        .output("T1", "Q", Expr::Lit(Value::Unit))
        .input("Q", "T2", Pattern::Any)
        .output("T2", "R", Expr::Lit(Value::Unit))
        .token("P", Value::Unit, 0);
    Net::new(m).unwrap()
}

#[test]
fn enabled_at_clock() {
    let net = single(0, None);
    let m = with_token(&net, "P", 1, 0);
    let en = enabled_bindings(&net, &m).unwrap();
    assert_eq!(en.len(), 1);
    assert_eq!(net.transition(en[0].transition).id, "T");
    assert_eq!(en[0].enabling_time, 0);
    assert_eq!(en[0].binding.vars["x"], Value::Int(1));
}

#[test]
fn empty_place_enables_nothing() {
    let net = single(0, None);
    assert!(enabled_bindings(&net, &net.empty_marking()).unwrap().is_empty());
}

#[test]
fn future_token_enables_later() {
    let net = single(0, None);
    let m = with_token(&net, "P", 1, 7);
    let en = enabled_bindings(&net, &m).unwrap();
    assert_eq!(en.len(), 1);
    assert_eq!(en[0].enabling_time, 7);
}

#[test]
fn fire_applies_delay_to_outputs() {
    let net = single(5000, None);
    let m = with_token(&net, "P", 1, 0);
    let en = enabled_bindings(&net, &m).unwrap();
    let (next, events) = fire(&net, &m, en[0].transition, &en[0].binding, &mut SimRng::new(0)).unwrap();
    let q = net.place_id("Q").unwrap();
    assert_eq!(next.count(net.place_id("P").unwrap()), 0);
    assert_eq!(next.tokens(q).collect::<Vec<_>>(), vec![(&Value::Int(1), 5000)]);
    assert_eq!(next.clock(), 0);
    assert_eq!(events[0].kind, EventKind::Fire);
    assert!(events.iter().any(|e| e.kind == EventKind::TokenConsumed));
    assert!(events.iter().any(|e| e.kind == EventKind::TokenCreated));
}

#[test]
fn transport_delay_of_eight_seconds() {
    let mut m = NetModel::new("transport");
    m.place("stock", ColorSet::Int)
        .place("station1", ColorSet::Int)
        .transition("move", Expr::int(8000))
        .input("stock", "move", Pattern::var("part"))
        .output("move", "station1", Expr::var("part"));
    let net = Net::new(m).unwrap();
    let mut mk = with_token(&net, "stock", 42, 0);
    mk = match advance(&net, &mk).unwrap() {
        Advance::Ready(m) => m,
        Advance::Deadlock => unreachable!(),
    };
    let en = enabled_bindings(&net, &mk).unwrap();
    let (next, _) = fire(&net, &mk, en[0].transition, &en[0].binding, &mut SimRng::new(0)).unwrap();
    let dst = net.place_id("station1").unwrap();
    assert_eq!(next.tokens(dst).next().unwrap().1, 8000);
}

#[test]
fn false_guard_rejects_fire() {
    let net = single(0, Some("(eq x 2)"));
    let m = with_token(&net, "P", 1, 0);
    assert!(enabled_bindings(&net, &m).unwrap().is_empty());
    // Hand-built binding for the only candidate.
    let binding = fmsim::petri::Binding {
        tokens: vec![(net.place_id("P").unwrap(), Value::Int(1), 1)],
        vars: [("x".to_string(), Value::Int(1))].into(),
    };
    let err = fire(&net, &m, net.transition_id("T").unwrap(), &binding, &mut SimRng::new(0)).unwrap_err();
    assert!(matches!(err, KernelError::NotEnabled { .. }), "{err}");
}

#[test]
fn fire_before_enabling_time_is_rejected() {
    let net = single(0, None);
    let m = with_token(&net, "P", 1, 7);
    let en = enabled_bindings(&net, &m).unwrap();
    let err = fire(&net, &m, en[0].transition, &en[0].binding, &mut SimRng::new(0)).unwrap_err();
    assert!(matches!(err, KernelError::NotEnabled { .. }));
}

#[test]
fn advance_moves_to_earliest_enabling() {
    let net = single(0, None);
    let m = with_token(&net, "P", 1, 7000);
    match advance(&net, &m).unwrap() {
        Advance::Ready(next) => {
            assert_eq!(next.clock(), 7000);
            assert_eq!(next.untimed(), m.untimed());
        }
        Advance::Deadlock => panic!("expected progress"),
    }
    let now = with_token(&net, "P", 1, 0);
    assert_eq!(advance(&net, &now).unwrap(), Advance::Ready(now.clone()));
    assert_eq!(advance(&net, &net.empty_marking()).unwrap(), Advance::Deadlock);
}

#[test]
fn chain_run_sums_delays() {
    let net = chain();
    let trace = run(&net, net.initial_marking(), 1_000_000, 1, &mut NoHooks).unwrap();
    let fires: Vec<(u64, &str)> = trace
        .fires()
        .map(|e| (e.time, e.transition.as_deref().unwrap()))
        .collect();
    assert_eq!(fires, vec![(0, "T1"), (5000, "T2")]);
    let last = trace.events.iter().rfind(|e| e.kind == EventKind::TokenCreated).unwrap();
    assert_eq!(last.payload.field("at"), Some(&Value::Int(8000)));
    assert_eq!(trace.outcome, Some(RunOutcome::Deadlock { at: 5000 }));
}

#[test]
fn horizon_cuts_the_chain() {
    let net = chain();
    let trace = run(&net, net.initial_marking(), 1000, 1, &mut NoHooks).unwrap();
    let fired: Vec<_> = trace.fires().map(|e| e.transition.clone().unwrap()).collect();
    assert_eq!(fired, vec!["T1"]);
    assert!(matches!(trace.outcome, Some(RunOutcome::Horizon { .. })));
    assert_eq!(
        run(&net, net.initial_marking(), 0, 1, &mut NoHooks).unwrap_err(),
        KernelError::InvalidHorizon
    );
}

#[test]
fn seeds_do_not_matter_without_randomness() {
    let net = chain();
    let a = run(&net, net.initial_marking(), 100_000, 1, &mut NoHooks).unwrap();
    let b = run(&net, net.initial_marking(), 100_000, 2, &mut NoHooks).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn conflict_resolution_is_total() {
    // Two transitions compete for one token; priority decides, then binding order.
    let mut m = NetModel::new("conflict");
    m.place("P", ColorSet::Int)
        .place("A", ColorSet::Int)
        .place("B", ColorSet::Int)
        .transition("ta", Expr::int(0))
        .transition("tb", Expr::int(0))
        .input("P", "ta", Pattern::var("x"))
        .output("ta", "A", Expr::var("x"))
        .input("P", "tb", Pattern::var("x"))
        .output("tb", "B", Expr::var("x"))
        .token("P", Value::Int(2), 0)
        .token("P", Value::Int(1), 0);
    m.transition_mut("ta").unwrap().priority = 5;
    let net = Net::new(m).unwrap();
    let en = enabled_bindings(&net, &net.initial_marking()).unwrap();
    let order: Vec<(String, Value)> = en
        .iter()
        .map(|e| (net.transition(e.transition).id.clone(), e.binding.vars["x"].clone()))
        .collect();
    assert_eq!(
        order,
        vec![
            ("tb".into(), Value::Int(1)),
            ("tb".into(), Value::Int(2)),
            ("ta".into(), Value::Int(1)),
            ("ta".into(), Value::Int(2)),
        ]
    );
}

#[test]
fn shared_variables_join_across_arcs() {
    let mut m = NetModel::new("join");
    let part: ColorSet = "{kind: str, order: int}".parse().unwrap();
    m.place("parts", part)
        .place("done", ColorSet::Int)
        .transition("assemble", Expr::int(0))
        .input("parts", "assemble", "{kind: \"a\", order: ?o}".parse().unwrap())
        .input("parts", "assemble", "{kind: \"b\", order: ?o}".parse().unwrap())
        .output("assemble", "done", Expr::var("o"))
        .token("parts", "{kind: \"a\", order: 1}".parse().unwrap(), 0)
        .token("parts", "{kind: \"b\", order: 2}".parse().unwrap(), 0);
    let net = Net::new(m.clone()).unwrap();
    assert!(enabled_bindings(&net, &net.initial_marking()).unwrap().is_empty());
    m.token("parts", "{kind: \"b\", order: 1}".parse().unwrap(), 3);
    let net = Net::new(m).unwrap();
    let en = enabled_bindings(&net, &net.initial_marking()).unwrap();
    assert_eq!(en.len(), 1);
    assert_eq!(en[0].binding.vars["o"], Value::Int(1));
    assert_eq!(en[0].enabling_time, 3);
}

#[test]
fn capacity_blocks_outputs_and_insertion() {
    let mut m = NetModel::new("cap");
    m.place("P", ColorSet::Unit)
        .bounded_place("Q", ColorSet::Unit, 1)
        .transition("T", Expr::int(0))
        .input("P", "T", Pattern::Any)
        .output("T", "Q", Expr::Lit(Value::Unit))
        .token("P", Value::Unit, 0)
        .token("P", Value::Unit, 0);
    let net = Net::new(m).unwrap();
    let trace = run(&net, net.initial_marking(), 10, 0, &mut NoHooks).unwrap();
    assert_eq!(trace.fires().count(), 1);

    let mut mk = net.empty_marking();
    let q = net.place_id("Q").unwrap();
    mk.add(&net, q, Value::Unit, 0).unwrap();
    assert!(matches!(mk.add(&net, q, Value::Unit, 0), Err(KernelError::CapacityExceeded { .. })));
    assert!(matches!(mk.add(&net, q, Value::Int(3), 0), Err(KernelError::ColorMismatch { .. })));
}

#[test]
fn malformed_net_is_refused() {
    let mut m = NetModel::new("bad");
    m.place("P", ColorSet::Unit).transition("T", Expr::int(0));
    assert!(matches!(Net::new(m), Err(KernelError::Malformed(d)) if d.len() == 1));
}

#[test]
fn two_place_cycle_has_two_markings() {
    let mut m = NetModel::new("cycle");
    m.place("A", ColorSet::Unit)
        .place("B", ColorSet::Unit)
        .transition("ab", Expr::int(1))
        .transition("ba", Expr::int(1))
        .input("A", "ab", Pattern::Any)
        .output("ab", "B", Expr::Lit(Value::Unit))
        .input("B", "ba", Pattern::Any)
        .output("ba", "A", Expr::Lit(Value::Unit))
        .token("A", Value::Unit, 0);
    let net = Net::new(m).unwrap();
    assert_eq!(reachable_markings(&net, &net.initial_marking(), 10).unwrap().len(), 2);
    assert_eq!(
        reachable_markings(&net, &net.initial_marking(), 1).unwrap_err(),
        KernelError::BoundExceeded { bound: 1 }
    );
}

#[test]
fn no_transitions_is_a_fixed_point() {
    let mut m = NetModel::new("static");
    m.place("A", ColorSet::Int).token("A", Value::Int(3), 0);
    let net = Net::new(m).unwrap();
    let set = reachable_markings(&net, &net.initial_marking(), 10).unwrap();
    assert_eq!(set, BTreeSet::from([net.initial_marking().untimed()]));
}

#[test]
fn random_outputs_branch_in_reachability() {
    let mut m = NetModel::new("coin");
    m.place("P", ColorSet::Unit)
        .place("Q", ColorSet::Bool)
        .transition("flip", Expr::int(0))
        .input("P", "flip", Pattern::Any)
        .output("flip", "Q", Expr::Bernoulli(0.5))
        .token("P", Value::Unit, 0);
    let net = Net::new(m).unwrap();
    assert_eq!(reachable_markings(&net, &net.initial_marking(), 10).unwrap().len(), 3);
}

/// Markings visited by a seeded run, after each firing.
fn visited(net: &Net, seed: u64) -> Vec<UntimedMarking> {
    let mut sim = Simulator::new(Arc::new(net.clone()), net.initial_marking(), seed);
    let mut out = vec![sim.marking().untimed()];
    for _ in 0..500 {
        match sim.step(u64::MAX).unwrap() {
            Step::Fired(_) => out.push(sim.marking().untimed()),
            _ => break,
        }
    }
    out
}

fn token_ring(tokens: &[(usize, i64)], delays: &[i64]) -> Net {
    let mut m = NetModel::new("ring");
    let n = delays.len();
    for i in 0..n {
        m.place(&format!("p{i}"), ColorSet::Int);
    }
    for (i, d) in delays.iter().enumerate() {
        let t = format!("t{i}");
        m.transition(&t, Expr::int(*d))
            .input(&format!("p{i}"), &t, Pattern::var("x"))
            .output(&t, &format!("p{}", (i + 1) % n), "(mod (add x 1) 3)".parse().unwrap());
    }
    for (p, v) in tokens {
        m.token(&format!("p{}", p % n), Value::Int(v.rem_euclid(3)), 0);
    }
    Net::new(m).unwrap()
}

proptest! {
    #[test]
    fn clock_is_monotone_and_runs_are_reproducible(
        tokens in prop::collection::vec((0usize..4, 0i64..3), 1..4),
        delays in prop::collection::vec(0i64..50, 2..5),
        seed in any::<u64>(),
    ) {
        let net = token_ring(&tokens, &delays);
        let a = run(&net, net.initial_marking(), 2_000, seed, &mut NoHooks).unwrap();
        let b = run(&net, net.initial_marking(), 2_000, seed, &mut NoHooks).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        for w in a.events.windows(2) {
            prop_assert!(w[0].time <= w[1].time);
            prop_assert!(w[0].seq < w[1].seq);
        }
        let states: BTreeSet<_> = visited(&net, seed).into_iter().collect();
        let reach = reachable_markings(&net, &net.initial_marking(), 10_000).unwrap();
        prop_assert!(states.is_subset(&reach));
    }
}
