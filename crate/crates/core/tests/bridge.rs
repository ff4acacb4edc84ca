use std::collections::BTreeMap;
use std::io::Read;

use fmsim::bridge::*;
use fmsim::fms::{transitions, FailureModel, FmsConfig, Operation, PartKind, StationId};
use fmsim::mes::{
    AgentId, AgentMessage, Dispatch, DispatchPolicy, MasConfig, Payload, Performative, Role, StatusEvent,
};
use fmsim::petri::{EventKind, SimEvent, Time, Value};
use proptest::prelude::*;

mod common;
use common::*;

const FOREVER: Time = 1_000_000_000_000;

fn fms(orders: u32) -> FmsConfig {
    FmsConfig {
        order_count: orders,
        ..FmsConfig::default()
    }
}

struct Run {
    controller: AgentController,
    trace: JointTrace,
    outcome: CoupledOutcome,
}

fn run_with(link: &mut dyn HsaLink, cfg: MasConfig, full: bool) -> Run {
    let mut controller = AgentController::new(cfg).unwrap();
    let mut trace = JointTrace::new(full);
    let outcome = step_coupled(link, &mut controller, FOREVER, &mut trace).unwrap();
    Run {
        controller,
        trace,
        outcome,
    }
}

fn run(cfg: MasConfig) -> Run {
    let mut link = InProcessHsa::new(cell_model(&cfg.fms).unwrap(), cfg.fms.sim_seed()).unwrap();
    run_with(&mut link, cfg, true)
}

fn roundtrip(m: &WireMessage) -> Vec<u8> {
    let bytes = serialize(m).unwrap();
    assert_eq!(&parse(&bytes).unwrap(), m, "{}", String::from_utf8_lossy(&bytes));
    bytes
}

#[test]
fn golden_descriptors() {
    for (file, m) in golden() {
        assert_eq!(roundtrip(&m), fixture(file), "{file}");
    }
    assert!(fixture("mas_descriptor.xml").starts_with(br#"<MAS NAME="RFIDMAS"><AGENTS-LIST><AGENT NAME="HA">"#));
    assert!(String::from_utf8(fixture("mas_empty.xml")).unwrap().contains("<AGENTS-LIST></AGENTS-LIST>"));
}

#[test]
fn legacy_object_spelling_is_accepted() {
    let WireMessage::Mas(m) = parse(&fixture("legacy_object_typo.xml")).unwrap() else { panic!() };
    assert_eq!(m.name, "RFIDMAS");
    assert_eq!(m.agents[0].name, "HA");
    assert_eq!(m.objects[0].name, "ASRS");
    assert_eq!(m.objects[0].current_state, None);
}

#[test]
fn truncated_input_reports_offset() {
    let full = fixture("mas_descriptor.xml");
    for cut in [10, full.len() / 2, full.len() - 1] {
        match parse(&full[..cut]) {
            Err(BridgeError::MalformedXml { offset, .. }) => {
                assert!(offset <= cut as u64, "offset {offset} past the cut {cut}")
            }
            other => panic!("cut at {cut}: {other:?}"),
        }
    }
    assert!(matches!(
        parse(b"<MAS NAME=\"X\"><AGENTS-LIST>"),
        Err(BridgeError::MalformedXml { offset: 27, .. })
    ));
    assert!(matches!(parse(b""), Err(BridgeError::MalformedXml { offset: 0, .. })));
}

#[test]
fn missing_name_and_unknown_elements() {
    let doc = b"<AGENT><ATTRIBUTES></ATTRIBUTES><CURRENT-STATE></CURRENT-STATE><ACTIONS></ACTIONS></AGENT>";
    assert_eq!(
        parse(doc),
        Err(BridgeError::MissingName {
            element: "AGENT".into(),
            offset: 0
        })
    );
    let doc = br#"<AGENT NAME=""><ATTRIBUTES></ATTRIBUTES><CURRENT-STATE></CURRENT-STATE><ACTIONS></ACTIONS></AGENT>"#;
    assert!(matches!(parse(doc), Err(BridgeError::MissingName { .. })));
    let doc = br#"<OBJECTS-LIST><OBJECT NAME="A"><ATTRIBUTES></ATTRIBUTES><COLOUR></COLOUR></OBJECT></OBJECTS-LIST>"#;
    assert_eq!(
        parse(doc),
        Err(BridgeError::UnknownElement {
            name: "COLOUR".into(),
            offset: 56
        })
    );
    assert!(matches!(parse(b"<mas NAME=\"x\"></mas>"), Err(BridgeError::UnknownElement { offset: 0, .. })));
    // Nameless descriptors cannot be written either.
    assert!(matches!(
        serialize(&WireMessage::Agent(Descriptor::new(""))),
        Err(BridgeError::Unserializable(_))
    ));
    let mut bad = Descriptor::new("X");
    bad.attributes.push(("k".into(), "bell\u{7}".into()));
    assert!(matches!(serialize(&WireMessage::Agent(bad)), Err(BridgeError::Unserializable(_))));
}

#[test]
fn escaping_survives() {
    let mut d = Descriptor::new("A&B <\"x\">");
    d.attributes.push(("note".into(), "a < b && c > d\n\ttabbed 'q'".into()));
    let bytes = roundtrip(&WireMessage::Object(d));
    assert!(bytes.starts_with(br#"<OBJECT NAME="A&amp;B &lt;&quot;x&quot;&gt;">"#));
}

#[test]
fn framing_definition() {
    let payload = fixture("mas_empty.xml");
    let f = frame(&payload, DEFAULT_FRAME_LIMIT).unwrap();
    assert_eq!(&f[..4], &(payload.len() as u32).to_be_bytes());
    assert_eq!(&f[4..], &payload[..]);
    assert_eq!(
        frame(&[0; 11], 10),
        Err(BridgeError::OversizeFrame { len: 11, limit: 10 })
    );
    let mut dec = FrameDecoder::new(10);
    dec.push(&[0, 0, 0, 11]);
    assert_eq!(dec.next_frame(), Err(BridgeError::OversizeFrame { len: 11, limit: 10 }));

    let mut dec = FrameDecoder::new(DEFAULT_FRAME_LIMIT);
    let mut r: &[u8] = &f[..f.len() - 3];
    assert!(matches!(read_frame(&mut r, &mut dec), Err(BridgeError::BrokenStream(_))));
    let mut r: &[u8] = &[];
    assert_eq!(read_frame(&mut r, &mut FrameDecoder::new(16)), Ok(None));
}

/// Feeds a stream one fixed-size read at a time.
struct Trickle<'a>(&'a [u8], usize);

impl Read for Trickle<'_> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.1.min(self.0.len()).min(buf.len());
        buf[..n].copy_from_slice(&self.0[..n]);
        self.0 = &self.0[n..];
        Ok(n)
    }
}

proptest! {
    #[test]
    fn frames_reassemble(a in proptest::collection::vec(any::<u8>(), 0..300),
                         b in proptest::collection::vec(any::<u8>(), 0..300),
                         cuts in proptest::collection::vec(0usize..700, 0..6),
                         step in 1usize..40) {
        let mut wire = frame(&a, 1024).unwrap();
        wire.extend(frame(&b, 1024).unwrap());
        let mut cuts: Vec<usize> = cuts.into_iter().map(|c| c.min(wire.len())).collect();
        cuts.push(0);
        cuts.push(wire.len());
        cuts.sort();
        let mut dec = FrameDecoder::new(1024);
        let mut got = Vec::new();
        for w in cuts.windows(2) {
            dec.push(&wire[w[0]..w[1]]);
            while let Some(f) = dec.next_frame().unwrap() {
                got.push(f);
            }
        }
        prop_assert_eq!(&got, &vec![a.clone(), b.clone()]);
        prop_assert_eq!(dec.pending(), 0);

        let mut r = Trickle(&wire, step);
        let mut dec = FrameDecoder::new(1024);
        prop_assert_eq!(read_frame(&mut r, &mut dec).unwrap(), Some(a));
        prop_assert_eq!(read_frame(&mut r, &mut dec).unwrap(), Some(b));
        prop_assert_eq!(read_frame(&mut r, &mut dec).unwrap(), None);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn messages_round_trip(m in message()) {
        let w = WireMessage::Message(m);
        let bytes = serialize(&w).unwrap();
        prop_assert_eq!(&parse(&bytes).unwrap(), &w);
        prop_assert_eq!(serialize(&w).unwrap(), bytes);
    }

    #[test]
    fn documents_round_trip(w in wire()) {
        let bytes = serialize(&w).unwrap();
        prop_assert_eq!(&parse(&bytes).unwrap(), &w);
    }
}

#[test]
fn cell_net_round_trips() {
    let mut cfg = fms(4);
    cfg.failure = Some(FailureModel::cnc(0.2, 30_000, 9));
    let model = cell_model(&cfg).unwrap();
    assert_eq!(parse(&serialize(&WireMessage::Net(model.clone())).unwrap()).unwrap(), WireMessage::Net(model.clone()));
    let setup = WireMessage::Setup { seed: 9, net: model };
    roundtrip(&setup);
}

fn dispatch(op: Operation, order: u32, part: Option<(u32, PartKind)>, station: StationId, resource: &str) -> Dispatch {
    Dispatch {
        task_id: 11,
        order_id: order,
        part,
        operation: op,
        station,
        resource: resource.into(),
    }
}

#[test]
fn decisions_translate_by_table() {
    let reg = ObjectRegistry::new(&fms(1));
    let part7 = Some((7, PartKind::Handle));
    let c = translate_decision(&dispatch(Operation::Machine, 3, part7, StationId::Machining, "cnc"), &reg, 5).unwrap();
    assert_eq!(
        (c.target.as_str(), c.action.as_str(), c.part, c.order_id, c.issued_at),
        ("CNC", "start-machining", part7, 3, 5)
    );
    let c = translate_decision(&dispatch(Operation::Assemble, 3, None, StationId::Assembly, "glue-assembly"), &reg, 0)
        .unwrap();
    assert_eq!((c.target.as_str(), c.action.as_str(), c.order_id), ("GLUE-ASSEMBLY", "start-assembly", 3));
    let c = translate_decision(&dispatch(Operation::Retrieve, 1, part7, StationId::Machining, "robot"), &reg, 0)
        .unwrap();
    assert_eq!((c.target.as_str(), c.action.as_str()), ("ROBOT", "start-retrieval"));
    assert_eq!(
        translate_decision(&dispatch(Operation::Machine, 3, part7, StationId::Machining, "lathe"), &reg, 0),
        Err(BridgeError::UnknownObject("LATHE".into()))
    );
    assert!(matches!(
        translate_decision(&dispatch(Operation::Machine, 3, part7, StationId::Machining, "robot"), &reg, 0),
        Err(BridgeError::UnknownAction { .. })
    ));
    for op in Operation::ALL {
        assert_eq!(operation_of(action_name(op)), Some(op));
    }
    assert_eq!(operation_of("start-welding"), None);
}

#[test]
fn unknown_targets_are_rejected_by_the_simulator() {
    let mut hsa = InProcessHsa::new(cell_model(&fms(1)).unwrap(), 1).unwrap();
    let mut c = ActionCommand {
        target: "LATHE".into(),
        action: "start-machining".into(),
        task_id: 1,
        order_id: 1,
        part: Some((0, PartKind::Body)),
        issued_at: 0,
    };
    assert_eq!(hsa.step(&[c.clone()], 0), Err(BridgeError::UnknownObject("LATHE".into())));
    c.target = "CNC".into();
    c.action = "start-welding".into();
    assert!(matches!(hsa.step(&[c], 0), Err(BridgeError::UnknownAction { .. })));
}

fn event(kind: EventKind, transition: Option<&str>, payload: Value) -> SimEvent {
    SimEvent {
        time: 26_000,
        seq: 40,
        kind,
        transition: transition.map(str::to_string),
        payload,
    }
}

#[test]
fn events_translate_by_policy() {
    let reg = ObjectRegistry::new(&fms(1));
    let binding = Value::record([
        ("part", Value::Int(7)),
        ("order", Value::Int(3)),
        ("kind", Value::str("handle")),
        ("obj", Value::str("CNC")),
    ]);
    let notify = |event| Translation::Notify {
        operation: Operation::Machine,
        order_id: 3,
        part: 7,
        event,
    };
    assert_eq!(
        translate_event(&event(EventKind::Fire, Some(transitions::CNC_DONE), binding.clone()), &reg),
        notify(StatusEvent::Completed)
    );
    assert_eq!(
        translate_event(&event(EventKind::Failure, Some(transitions::CNC_FAIL), binding.clone()), &reg),
        notify(StatusEvent::Failed)
    );
    assert_eq!(
        translate_event(&event(EventKind::Repair, Some(transitions::CNC_REPAIR), binding.clone()), &reg),
        notify(StatusEvent::Repaired)
    );
    // Starting is not news.
    assert_eq!(
        translate_event(&event(EventKind::Fire, Some(transitions::CNC_START), binding), &reg),
        Translation::Ignore
    );
    // A conveyor coming back: a state update for its station, nobody notified.
    let created = Value::record([
        ("place", Value::str("transport_idle")),
        ("color", Value::str("CONVEYOR")),
        ("at", Value::Int(26_000)),
    ]);
    let Translation::Update { station, update } =
        translate_event(&event(EventKind::TokenCreated, Some(transitions::STORE), created), &reg)
    else {
        panic!()
    };
    assert_eq!(station, Some(StationId::Asrs));
    assert_eq!((update.object.as_str(), update.state.as_str(), update.at), ("CONVEYOR", "idle", 26_000));
    let part_moved = Value::record([
        ("place", Value::str("s1_in")),
        ("color", Value::record([("part", Value::Int(7)), ("order", Value::Int(3))])),
        ("at", Value::Int(26_000)),
    ]);
    let Translation::Update { station, update } =
        translate_event(&event(EventKind::TokenCreated, Some(transitions::ARRIVE_S1), part_moved), &reg)
    else {
        panic!()
    };
    assert_eq!((station, update.object.as_str(), update.state.as_str()), (Some(StationId::Machining), "PART-7", "s1_in"));
    let consumed = event(EventKind::TokenConsumed, Some(transitions::ARRIVE_S1), Value::Unit);
    assert_eq!(translate_event(&consumed, &reg), Translation::Ignore);
}

fn cfg(orders: u32, policy: DispatchPolicy) -> MasConfig {
    let mut c = MasConfig::new(fms(orders));
    c.policy = policy;
    c
}

#[test]
fn single_order_sequential_is_101000() {
    let mut r = run(cfg(1, DispatchPolicy::Sequential));
    assert_eq!(completions(&r.trace.events), BTreeMap::from([(1, 101_000)]));
    assert_eq!(r.outcome, CoupledOutcome::Quiescent { at: 101_000 });
    assert_eq!(r.controller.mas().sma().done, 1);
    let last_fire = r.trace.events.iter().rev().find(|e| e.kind == EventKind::Fire).unwrap();
    assert_eq!(last_fire.transition.as_deref(), Some(transitions::STORE));
    assert!(audit(&r.trace).is_empty());
    assert_eq!(r.trace.commands.len(), 3 * 3 + 2);
    assert!(r.trace.conformance(true).is_empty());
}

#[test]
fn single_order_pipelined_is_69000() {
    let r = run(cfg(1, DispatchPolicy::Pipelined));
    assert_eq!(completions(&r.trace.events), BTreeMap::from([(1, 69_000)]));
}

#[test]
fn no_orders_is_immediately_quiescent() {
    let r = run(cfg(0, DispatchPolicy::Pipelined));
    assert_eq!(r.outcome, CoupledOutcome::Quiescent { at: 0 });
    assert!(r.trace.commands.is_empty());
    assert!(r.trace.events.is_empty());
    assert_eq!(r.trace.messages, 0);
}

#[test]
fn second_orders_machining_follows_the_first() {
    let r = run(cfg(2, DispatchPolicy::Pipelined));
    let cal = r.controller.mas().calendar();
    let mut by_order: BTreeMap<u32, Vec<(Time, Time)>> = BTreeMap::new();
    for c in cal.commitments("cnc") {
        let cmd = r.trace.commands.iter().find(|x| x.task_id == c.task_id).unwrap();
        by_order.entry(cmd.order_id).or_default().push((c.start, c.end));
    }
    let first_end = by_order[&1].iter().map(|w| w.1).max().unwrap();
    let second_start = by_order[&2].iter().map(|w| w.0).min().unwrap();
    assert_eq!(by_order[&1].len(), 3);
    assert_eq!(by_order[&2].len(), 3);
    assert!(second_start >= first_end, "{by_order:?}");
    assert!(cal.overlaps().is_empty());
    // The simulator agrees with the calendar.
    let machining: Vec<Time> = r
        .trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Fire && e.transition.as_deref() == Some(transitions::CNC_START))
        .map(|e| e.time)
        .collect();
    let planned: Vec<Time> = by_order.values().flatten().map(|w| w.0).collect();
    assert_eq!(machining, planned);
}

#[test]
fn completions_reach_the_station_monitor() {
    let r = run(cfg(1, DispatchPolicy::Pipelined));
    let notes: Vec<&AgentMessage> = r
        .trace
        .entries
        .iter()
        .filter_map(|e| match e {
            JointEntry::Message(m) => Some(m),
            _ => None,
        })
        .filter(|m| m.sender.role == Role::Ha && m.performative == Performative::Notify)
        .collect();
    // Eleven operations, each reported to the station monitor and the SMCA.
    assert_eq!(notes.len(), 22);
    let machined = notes
        .iter()
        .find(|m| matches!(&m.payload, Payload::Status(s) if s.operation == Operation::Machine))
        .unwrap();
    assert_eq!(machined.receiver, AgentId::station(Role::SmonA, StationId::Machining));
    // Token movements only land in the station databases.
    assert!(r.trace.updates > 0);
    let db = r.controller.mas().database(Some(StationId::Asrs));
    assert!(db.query("state/ORDER-1").is_some());
}

#[test]
fn failures_are_reported_once_each() {
    let mut c = cfg(10, DispatchPolicy::Pipelined);
    c.fms.failure = Some(FailureModel::cnc(0.2, 30_000, 5));
    let mut r = run(c);
    assert_eq!(completions(&r.trace.events).len(), 10);
    let failures = r.trace.events.iter().filter(|e| e.kind == EventKind::Failure).count();
    assert!(failures > 0);
    assert!(audit(&r.trace).is_empty(), "{:?}", audit(&r.trace));
    assert!(r.trace.conformance(true).is_empty());
}

#[test]
fn framed_transport_matches_in_process() {
    let c = cfg(10, DispatchPolicy::Pipelined);
    let model = cell_model(&c.fms).unwrap();
    let local = run(c.clone());
    let mut link = FramedHsa::loopback(&model, c.fms.sim_seed()).unwrap();
    let remote = run_with(&mut link, c, true);
    assert_eq!(local.outcome, remote.outcome);
    assert_eq!(local.trace.entries, remote.trace.entries);
    let text = |t: &JointTrace| {
        let mut out = Vec::new();
        t.write_lines(&mut out).unwrap();
        out
    };
    assert_eq!(text(&local.trace), text(&remote.trace));
    assert_eq!(completions(&remote.trace.events).len(), 10);
}

#[test]
fn framed_server_reports_bad_commands() {
    let model = cell_model(&fms(1)).unwrap();
    let mut link = FramedHsa::loopback(&model, 1).unwrap();
    let c = ActionCommand {
        target: "LATHE".into(),
        action: "start-machining".into(),
        task_id: 1,
        order_id: 1,
        part: None,
        issued_at: 0,
    };
    assert_eq!(link.step(&[c], 10), Err(BridgeError::UnknownObject("LATHE".into())));
}

#[test]
fn mas_descriptor_lists_the_population() {
    let r = run(cfg(0, DispatchPolicy::Pipelined));
    let d = mas_descriptor("RFIDMAS", r.controller.mas(), r.controller.registry());
    assert_eq!(d.name, "RFIDMAS");
    let names: Vec<&str> = d.agents.iter().map(|a| a.name.as_str()).collect();
    for n in ["SMA", "AM", "SMCA", "DBA-shop", "HA", "SCA@station1-machining", "SMonA@station3-asrs"] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }
    let objects: Vec<&str> = d.objects.iter().map(|o| o.name.as_str()).collect();
    assert_eq!(objects, ["ASRS-CRANE", "CNC", "CONVEYOR", "GLUE-ASSEMBLY", "LASER-QC", "ROBOT"]);
    roundtrip(&WireMessage::Mas(d));
}

#[test]
fn pacing_slows_the_run_but_not_the_trace() {
    let c = cfg(1, DispatchPolicy::Pipelined);
    let model = cell_model(&c.fms).unwrap();
    let plain = run(c.clone());
    let started = std::time::Instant::now();
    let mut link = PacedLink::new(InProcessHsa::new(model, c.fms.sim_seed()).unwrap(), 5_000.0).unwrap();
    let paced = run_with(&mut link, c, true);
    // 69 simulated seconds at 5000x
    assert!(started.elapsed() >= std::time::Duration::from_micros(13_800));
    assert_eq!(plain.trace.entries, paced.trace.entries);
    assert!(PacedLink::new(InProcessHsa::new(cell_model(&fms(0)).unwrap(), 1).unwrap(), f64::NAN).is_err());
}
