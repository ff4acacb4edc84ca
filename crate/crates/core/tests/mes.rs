use std::collections::BTreeMap;

use fmsim::fms::{FmsConfig, Operation, PartKind, StationId};
use fmsim::mes::{
    check_transcript, default_capabilities, match_capability, parse_capability, AgentId, AgentState, Calendar, Dispatch,
    DispatchPolicy, Draft, Mas, MasConfig, MesError, Payload, Performative, ResourceState, Role, StatusEvent,
    TaskAnnouncement,
};
use fmsim::petri::{Time, Value};

fn mas() -> Mas {
    Mas::new(MasConfig::new(FmsConfig::default())).unwrap()
}

fn with_order(mas: &mut Mas, order: u32) {
    mas.write_record(None, &format!("order/{order}"), Value::Int(order.into())).unwrap();
}

fn part(order: u32, kind: PartKind) -> Option<(u32, PartKind)> {
    Some((fmsim::fms::part_id(order, kind), kind))
}

fn shape(m: &fmsim::mes::AgentMessage) -> (Role, Role, Performative, &'static str) {
    (m.sender.role, m.receiver.role, m.performative, m.payload.kind())
}

/// Stands in for the shop floor: every dispatch completes after its nominal
/// duration on its own resource. Returns the time the last order finished.
fn drive(mas: &mut Mas, orders: u32) -> Time {
    let fms = mas.config().fms.clone();
    mas.receive_orders(1, orders).unwrap();
    mas.run().unwrap();
    let mut due: BTreeMap<(Time, u64), Dispatch> = BTreeMap::new();
    loop {
        for d in mas.take_dispatches() {
            due.insert((mas.now() + d.operation.duration(&fms), d.task_id), d);
        }
        let Some(((t, _), d)) = due.pop_first() else { break };
        mas.advance_to(t).unwrap();
        mas.signal(d.operation, d.order_id, d.part.map_or(0, |p| p.0), StatusEvent::Completed)
            .unwrap();
        mas.run().unwrap();
    }
    assert_eq!(mas.sma().done, orders, "every order stored");
    mas.now()
}

#[test]
fn negotiation_is_eight_messages() {
    let mut mas = mas();
    with_order(&mut mas, 1);
    let task = TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Machine);
    let out = mas.start_new_task(task).unwrap();
    use Performative::*;
    use Role::*;
    let got: Vec<_> = out.transcript.iter().map(shape).collect();
    assert_eq!(
        got,
        vec![
            (Ha, Am, Request, "task"),
            (Am, DbaShop, Query, "lookup"),
            (DbaShop, Am, Inform, "record"),
            (Am, Sca, Query, "availability-query"),
            (Sca, Am, Propose, "availability"),
            (Am, Sca, Accept, "allocation"),
            (Am, DbaShop, Inform, "allocation"),
            (DbaShop, Sca, Inform, "allocation"),
        ]
    );
    let a = out.allocation.unwrap();
    assert_eq!(a.station, StationId::Machining);
    assert_eq!(a.resources, vec!["cnc".to_string()]);
    assert_eq!((a.start, a.end), (0, 10_000));
    assert!(check_transcript(&out.transcript, true).is_empty());

    // The station then writes the allocation, and the MRA and AMI hand it on.
    let dispatch: Vec<_> = mas.dispatch_conversation(1).into_iter().map(shape).collect();
    assert_eq!(
        dispatch,
        vec![
            (Sca, DbaStation, Request, "write"),
            (DbaStation, Sca, Inform, "ack"),
            (Sca, Mra, Command, "dispatch"),
            (Mra, Ami, Command, "dispatch"),
            (Mra, SmonA, Notify, "status"),
            (Ami, Ha, Command, "dispatch"),
        ]
    );
    assert!(mas.database(Some(StationId::Machining)).query("alloc/1").is_some());
    assert!(mas.database(None).query("alloc/1").is_some());
    let d = mas.take_dispatches();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].resource, "cnc");
    assert!(mas.anomalies().is_empty(), "{:?}", mas.anomalies());
}

#[test]
fn missing_order_record_is_refused() {
    let mut mas = mas();
    let task = TaskAnnouncement::new(1, 9, part(9, PartKind::Cover), Operation::Retrieve);
    let out = mas.start_new_task(task).unwrap();
    assert!(out.allocation.is_none());
    let got: Vec<_> = out.transcript.iter().map(shape).collect();
    assert_eq!(got.len(), 4);
    assert_eq!(got[2], (Role::DbaShop, Role::Am, Performative::Inform, "record"));
    assert!(matches!(&out.transcript[2].payload, Payload::Record { record: None, .. }));
    assert_eq!(got[3], (Role::Am, Role::Ha, Performative::Refuse, "task"));
    assert_eq!(out.transcript[3].in_reply_to, Some(out.transcript[0].seq));
    assert_eq!(mas.ha().refusals, 1);
    assert!(check_transcript(&out.transcript, true).is_empty());
}

#[test]
fn second_machining_waits_for_the_cnc() {
    let mut mas = mas();
    with_order(&mut mas, 1);
    let first = mas
        .start_new_task(TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Machine))
        .unwrap();
    assert!(first.allocation.is_some());
    let second = mas
        .start_new_task(TaskAnnouncement::new(2, 1, part(1, PartKind::Handle), Operation::Machine))
        .unwrap();
    assert!(second.allocation.is_none());
    let last = second.transcript.last().unwrap();
    assert_eq!(shape(last), (Role::Sca, Role::Am, Performative::Refuse, "availability"));
    assert!(mas.am().blocked.contains("milling"));

    mas.take_dispatches();
    mas.advance_to(10_000).unwrap();
    mas.signal(Operation::Machine, 1, fmsim::fms::part_id(1, PartKind::Body), StatusEvent::Completed)
        .unwrap();
    mas.run().unwrap();
    let a = &mas.allocations()[&2];
    assert_eq!((a.start, a.end), (10_000, 20_000));
    assert_eq!(mas.allocations()[&1].end, 10_000);
    assert!(mas.calendar().overlaps().is_empty());
    assert!(check_transcript(mas.transcript(), false).is_empty());
}

#[test]
fn station_offers_only_idle_resources() {
    let mut mas = mas();
    with_order(&mut mas, 1);
    mas.advance_to(500).unwrap();
    let out = mas
        .start_new_task(TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Retrieve))
        .unwrap();
    let propose = &out.transcript[4];
    let Payload::Availability(r) = &propose.payload else { panic!() };
    assert!(r.available);
    assert_eq!(r.earliest_start, Some(500));
    assert_eq!(r.resources, vec!["robot".to_string()]);
    let sca = mas.agent(&AgentId::station(Role::Sca, StationId::Machining)).unwrap();
    let AgentState::Sca(sca) = &sca.state else { panic!() };
    assert_eq!(sca.resources["robot"], ResourceState::Busy(1));
    assert_eq!(sca.resources["cnc"], ResourceState::Idle);
}

#[test]
fn database_answers_missing_keys_negatively() {
    let mut mas = mas();
    let am = AgentId::shop(Role::Am);
    let draft = Draft::new(
        AgentId::shop(Role::DbaShop),
        Performative::Query,
        "task-1",
        Payload::Lookup { key: "order/77".into() },
    );
    let seq = mas.send(&am, draft).unwrap();
    mas.run().unwrap();
    let reply = mas.transcript().last().unwrap();
    assert_eq!(reply.in_reply_to, Some(seq));
    assert!(matches!(&reply.payload, Payload::Record { record: None, key } if key == "order/77"));
}

#[test]
fn bad_addresses_and_tasks_are_rejected() {
    let mut mas = mas();
    let ghost = AgentId::mra(StationId::Assembly, 9);
    let draft = Draft::new(ghost.clone(), Performative::Inform, "orders", Payload::Orders { first: 1, count: 1 });
    assert!(matches!(mas.send(&AgentId::shop(Role::Ha), draft), Err(MesError::UnknownAgent(_))));
    assert!("XYZ@station1-machining".parse::<AgentId>().is_err());
    assert!("SCA".parse::<AgentId>().is_err());
    let bad = TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Assemble);
    assert!(matches!(mas.start_new_task(bad), Err(MesError::MalformedTask(_))));
    let mut empty = TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Machine);
    empty.required_capabilities.clear();
    assert!(matches!(mas.start_new_task(empty), Err(MesError::MalformedTask(_))));
}

#[test]
fn agent_names_round_trip() {
    for s in ["SMA", "DBA-shop", "SCA@station1-machining", "MRA#1@station3-asrs", "DBA-station@station2-assembly"] {
        assert_eq!(s.parse::<AgentId>().unwrap().to_string(), s);
    }
}

#[test]
fn unplaceable_task_is_refused() {
    let mut cfg = MasConfig::new(FmsConfig::default());
    cfg.capabilities.retain(|r| r.capability != "milling");
    let mut mas = Mas::new(cfg).unwrap();
    with_order(&mut mas, 1);
    let out = mas
        .start_new_task(TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Machine))
        .unwrap();
    assert!(out.allocation.is_none());
    assert_eq!(shape(out.transcript.last().unwrap()), (Role::Am, Role::Ha, Performative::Refuse, "task"));
}

#[test]
fn capability_matching() {
    let fms = FmsConfig::default();
    let records = default_capabilities(&fms);
    let layout = fmsim::fms::stations(&fms);
    let cal = Calendar::new();
    let milling = match_capability(&["milling".into()], &records, &layout, &cal, 0).unwrap();
    assert_eq!(milling.len(), 1);
    assert_eq!(milling[0].station, StationId::Machining);
    assert_eq!(milling[0].resources, vec!["cnc".to_string()]);

    let transport = match_capability(&["transport".into()], &records, &layout, &cal, 0).unwrap();
    let got: Vec<_> = transport.iter().map(|c| (c.station, c.resources[0].as_str())).collect();
    assert_eq!(got, vec![(StationId::Machining, "robot"), (StationId::Asrs, "conveyor")]);

    // A busy robot pushes its station behind the conveyor's.
    let mut busy = Calendar::new();
    busy.allocate(&["robot".into()], 1, 0, 8_000).unwrap();
    let transport = match_capability(&["transport".into()], &records, &layout, &busy, 0).unwrap();
    assert_eq!(transport[0].station, StationId::Asrs);
    assert_eq!(transport[1].earliest_start, 8_000);

    let both = match_capability(&["assembly".into(), "inspection".into()], &records, &layout, &cal, 0).unwrap();
    assert_eq!(both[0].resources, vec!["glue-assembly".to_string(), "laser-qc".to_string()]);

    assert_eq!(
        match_capability(&["teleportation".into()], &records, &layout, &cal, 0),
        Err(MesError::NoCapableStation(vec!["teleportation".into()]))
    );
    let rec = parse_capability("cnc milling process_time=10000").unwrap();
    assert_eq!(rec.to_string(), "cnc milling process_time=10000");
    assert!(parse_capability("cnc").is_err());
}

#[test]
fn calendar_rejects_overlaps() {
    let mut cal = Calendar::new();
    cal.allocate(&["cnc".into()], 1, 0, 10_000).unwrap();
    cal.allocate(&["cnc".into()], 2, 10_000, 20_000).unwrap();
    let err = cal.allocate(&["cnc".into()], 3, 5_000, 15_000).unwrap_err();
    assert!(matches!(err, MesError::OverlapConflict { task: 3, other: 1, .. }));
    assert_eq!(cal.commitments("cnc").len(), 2);
    assert!(cal.overlaps().is_empty());
    assert_eq!(cal.free_at("cnc", 0), 20_000);
    cal.finish(2, 12_000);
    assert_eq!(cal.free_at("cnc", 0), 12_000);
}

#[test]
fn single_order_pipelined_and_sequential() {
    let mut m = mas();
    assert_eq!(drive(&mut m, 1), 69_000);
    assert!(check_transcript(m.transcript(), true).is_empty());
    assert!(m.anomalies().is_empty(), "{:?}", m.anomalies());
    assert_eq!(m.allocations().len(), 11);

    let mut cfg = MasConfig::new(FmsConfig::default());
    cfg.policy = DispatchPolicy::Sequential;
    let mut m = Mas::new(cfg).unwrap();
    assert_eq!(drive(&mut m, 1), 101_000);
}

#[test]
fn many_orders_conform_and_never_overlap() {
    let mut m = mas();
    drive(&mut m, 12);
    let v = check_transcript(m.transcript(), true);
    assert!(v.is_empty(), "{}", v[0]);
    assert!(m.anomalies().is_empty(), "{:?}", m.anomalies());
    assert!(m.calendar().overlaps().is_empty());
    assert_eq!(m.allocations().len(), 12 * 11);
    // Each task allocated exactly once.
    let accepts = m
        .transcript()
        .iter()
        .filter(|x| x.performative == Performative::Accept)
        .count();
    assert_eq!(accepts, 12 * 11);
}

#[test]
fn replay_reproduces_agent_states() {
    let mut m = mas();
    drive(&mut m, 3);
    let again = Mas::replay(m.config().clone(), m.transcript()).unwrap();
    for a in m.agents().filter(|a| a.id.role != Role::Ha) {
        assert_eq!(Some(a), again.agent(&a.id), "{}", a.id);
    }
    let mut twice = mas();
    drive(&mut twice, 3);
    assert_eq!(m.transcript(), twice.transcript());
}

#[test]
fn tampered_transcripts_are_caught() {
    let mut m = mas();
    drive(&mut m, 1);
    let t = m.transcript().to_vec();
    let mut dropped = t.clone();
    let i = dropped
        .iter()
        .position(|x| x.performative == Performative::Propose)
        .unwrap();
    dropped.remove(i);
    assert!(!check_transcript(&dropped, true).is_empty());

    let mut dangling = t.clone();
    dangling[2].in_reply_to = Some(999);
    assert!(!check_transcript(&dangling, false).is_empty());

    let truncated = &t[..t.len() - 1];
    assert!(check_transcript(truncated, false).is_empty());
    assert!(!check_transcript(truncated, true).is_empty());
}

#[test]
fn message_storms_are_divergence() {
    let mut cfg = MasConfig::new(FmsConfig::default());
    cfg.budget = 5;
    let mut m = Mas::new(cfg).unwrap();
    m.receive_orders(1, 1).unwrap();
    assert!(matches!(m.run(), Err(MesError::Divergence { at: 0, .. })));
}

#[test]
fn failures_flow_to_the_station() {
    let mut m = mas();
    with_order(&mut m, 1);
    m.start_new_task(TaskAnnouncement::new(1, 1, part(1, PartKind::Body), Operation::Machine))
        .unwrap();
    let body = fmsim::fms::part_id(1, PartKind::Body);
    m.advance_to(10_000).unwrap();
    m.signal(Operation::Machine, 1, body, StatusEvent::Failed).unwrap();
    m.run().unwrap();
    let sca = |m: &Mas| match &m.agent(&AgentId::station(Role::Sca, StationId::Machining)).unwrap().state {
        AgentState::Sca(s) => s.resources["cnc"],
        _ => unreachable!(),
    };
    assert_eq!(sca(&m), ResourceState::Down(1));
    m.advance_to(40_000).unwrap();
    m.signal(Operation::Machine, 1, body, StatusEvent::Repaired).unwrap();
    m.run().unwrap();
    assert_eq!(sca(&m), ResourceState::Busy(1));
    m.advance_to(50_000).unwrap();
    m.signal(Operation::Machine, 1, body, StatusEvent::Completed).unwrap();
    m.run().unwrap();
    assert_eq!(sca(&m), ResourceState::Idle);
    assert_eq!(m.allocations()[&1].end, 50_000);
    let conv: Vec<_> = m.dispatch_conversation(1).into_iter().cloned().collect();
    assert!(check_transcript(&conv, true).is_empty());
    assert!(matches!(
        m.signal(Operation::Machine, 1, body, StatusEvent::Completed),
        Err(MesError::Divergence { .. })
    ));
}
