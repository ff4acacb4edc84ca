//! Generators shared by the test targets.
#![allow(dead_code)]

use fmsim::bridge::{ActionCommand, ActionEntry, Descriptor, MasDescriptor, StateEntry, StateUpdate, StepOutcome, WireMessage};
use fmsim::fms::{part_id, Operation, PartKind, StationId};
use fmsim::mes::{
    AgentId, AgentMessage, Dispatch, Payload, Performative, Role, Status, StatusEvent, TaskAnnouncement,
};
use fmsim::petri::{EventKind, SimEvent, Value};
use proptest::prelude::*;

pub fn text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9 <>&\"'=/\\\\\n\t.-]{0,12}").unwrap()
}

pub fn name() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[A-Za-z][A-Za-z0-9 <>&\"'./-]{0,10}").unwrap()
}

pub fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Unit),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        text().prop_map(Value::Str),
    ];
    leaf.prop_recursive(3, 16, 4, |inner| {
        proptest::collection::btree_map("[a-z][a-z0-9_]{0,5}", inner, 0..4).prop_map(Value::Record)
    })
}

pub fn agent() -> impl Strategy<Value = AgentId> {
    (0..Role::ALL.len(), 0u32..3, 0..StationId::ALL.len()).prop_map(|(r, i, s)| {
        let role = Role::ALL[r];
        let station = role.station_level().then_some(StationId::ALL[s]);
        AgentId::new(role, if role == Role::Mra { i } else { 0 }, station).unwrap()
    })
}

pub fn operation() -> impl Strategy<Value = (Operation, Option<(u32, PartKind)>)> {
    (0..Operation::ALL.len(), 1u32..500, 0..3usize).prop_map(|(o, order, k)| {
        let op = Operation::ALL[o];
        let kind = PartKind::ALL[k];
        let part = (!op.per_order()).then(|| (part_id(order, kind), kind));
        (op, part)
    })
}

/// Ids inside payloads travel as token integers.
pub fn id() -> std::ops::RangeInclusive<u64> {
    0..=i64::MAX as u64
}

pub fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (1u32..1000, 0u32..1000).prop_map(|(first, count)| Payload::Orders { first, count }),
        (1u32..1000).prop_map(|order_id| Payload::Release { order_id }),
        (1u32..1000).prop_map(|order_id| Payload::OrderDone { order_id }),
        (id(), 1u32..1000, operation(), proptest::option::of(0u64..1 << 40)).prop_map(
            |(task, order, (op, part), deadline)| {
                let mut t = TaskAnnouncement::new(task, order, part, op);
                t.deadline = deadline;
                Payload::Task(t)
            }
        ),
        text().prop_map(|key| Payload::Lookup { key }),
        (text(), value()).prop_map(|(key, value)| Payload::Write { key, value }),
        text().prop_map(|key| Payload::Ack { key }),
        (id(), proptest::collection::vec("[a-z-]{1,8}", 0..3), 0u64..100_000).prop_map(
            |(task_id, capabilities, duration)| Payload::AvailabilityQuery {
                task_id,
                capabilities,
                duration
            }
        ),
        (id(), 1u32..1000, operation(), 0..3usize, "[a-z-]{1,8}").prop_map(
            |(task_id, order_id, (operation, part), s, resource)| Payload::Dispatch(Dispatch {
                task_id,
                order_id,
                part,
                operation,
                station: StationId::ALL[s],
                resource,
            })
        ),
        (id(), 1u32..1000, operation(), "[a-z-]{1,8}", 0..4usize, 0u64..1 << 40).prop_map(
            |(task_id, order_id, (operation, _), resource, e, at)| Payload::Status(Status {
                task_id,
                order_id,
                operation,
                resource,
                event: [StatusEvent::Started, StatusEvent::Completed, StatusEvent::Failed, StatusEvent::Repaired][e],
                at,
            })
        ),
    ]
}

pub fn message() -> impl Strategy<Value = AgentMessage> {
    (
        name(),
        agent(),
        agent(),
        0..Performative::ALL.len(),
        proptest::option::of(any::<u64>()),
        any::<u64>(),
        payload(),
        0u64..1 << 50,
    )
        .prop_map(
            |(conversation_id, sender, receiver, p, in_reply_to, seq, payload, sent_at)| AgentMessage {
                conversation_id,
                sender,
                receiver,
                performative: Performative::ALL[p],
                in_reply_to,
                seq,
                payload,
                sent_at,
            },
        )
}

pub fn command() -> impl Strategy<Value = ActionCommand> {
    (name(), name(), any::<u64>(), any::<u32>(), operation(), any::<u64>()).prop_map(
        |(target, action, task_id, order_id, (_, part), issued_at)| ActionCommand {
            target,
            action,
            task_id,
            order_id,
            part,
            issued_at,
        },
    )
}

pub fn sim_event() -> impl Strategy<Value = SimEvent> {
    (any::<u64>(), any::<u64>(), 0..EventKind::ALL.len(), proptest::option::of("[a-z_0-9]{1,10}"), value()).prop_map(
        |(time, seq, k, transition, payload)| SimEvent {
            time,
            seq,
            kind: EventKind::ALL[k],
            transition,
            payload,
        },
    )
}

pub fn descriptor() -> impl Strategy<Value = Descriptor> {
    let entry = (name(), proptest::collection::vec((name(), text()), 0..3))
        .prop_map(|(name, params)| ActionEntry { name, params });
    (
        name(),
        proptest::collection::vec((name(), text()), 0..3),
        proptest::option::of((name(), any::<u64>()).prop_map(|(name, time)| StateEntry { name, time })),
        proptest::collection::vec(entry, 0..3),
    )
        .prop_map(|(name, attributes, current_state, actions)| Descriptor {
            name,
            attributes,
            current_state,
            actions,
        })
}

pub fn wire() -> impl Strategy<Value = WireMessage> {
    prop_oneof![
        message().prop_map(WireMessage::Message),
        command().prop_map(WireMessage::Command),
        (name(), name(), any::<u64>(), value()).prop_map(|(object, state, at, payload)| {
            WireMessage::Update(StateUpdate {
                object,
                state,
                at,
                payload,
            })
        }),
        sim_event().prop_map(WireMessage::Event),
        (any::<u64>(), proptest::collection::vec(command(), 0..3))
            .prop_map(|(until, commands)| WireMessage::Step { until, commands }),
        (0..3usize, any::<u64>(), proptest::collection::vec(sim_event(), 0..3)).prop_map(|(o, now, events)| {
            WireMessage::StepResult {
                outcome: [StepOutcome::Fired, StepOutcome::Deadlock, StepOutcome::Horizon][o],
                now,
                events,
            }
        }),
        descriptor().prop_map(WireMessage::Agent),
        descriptor().prop_map(WireMessage::Object),
        proptest::collection::vec(descriptor(), 0..3).prop_map(WireMessage::Objects),
    ]
}

fn state(name: &str) -> Option<StateEntry> {
    Some(StateEntry {
        name: name.into(),
        time: 0,
    })
}

fn asrs_object(actions: &[&str]) -> Descriptor {
    Descriptor {
        name: "ASRS".into(),
        attributes: vec![("station".into(), "station3-asrs".into())],
        current_state: state("idle"),
        actions: actions
            .iter()
            .map(|a| ActionEntry {
                name: a.to_string(),
                params: vec![],
            })
            .collect(),
    }
}

/// Documents with hand-written expected bytes in `tests/fixtures`.
pub fn golden() -> Vec<(&'static str, WireMessage)> {
    let int = |k: &str| (k.to_string(), "int".to_string());
    let mas = MasDescriptor {
        name: "RFIDMAS".into(),
        agents: vec![Descriptor {
            attributes: vec![("role".into(), "HA".into())],
            current_state: state("active"),
            ..Descriptor::new("HA")
        }],
        objects: vec![asrs_object(&["start-retrieval", "start-storage"])],
        states: vec![state("idle").unwrap(), state("busy").unwrap()],
        actions: vec![ActionEntry {
            name: "start-retrieval".into(),
            params: vec![int("part"), int("order")],
        }],
    };
    let agent = Descriptor {
        attributes: vec![("role".into(), "SMA".into()), ("max-wip".into(), "3".into())],
        current_state: state("active"),
        actions: vec![ActionEntry {
            name: "release".into(),
            params: vec![int("order")],
        }],
        ..Descriptor::new("SMA")
    };
    let empty = MasDescriptor {
        name: "RFIDMAS".into(),
        agents: vec![],
        objects: vec![],
        states: vec![],
        actions: vec![],
    };
    let command = ActionCommand {
        target: "CNC".into(),
        action: "start-machining".into(),
        task_id: 7,
        order_id: 3,
        part: Some((7, PartKind::Handle)),
        issued_at: 16_000,
    };
    vec![
        ("mas_descriptor.xml", WireMessage::Mas(mas)),
        ("agent_descriptor.xml", WireMessage::Agent(agent)),
        ("objects_list.xml", WireMessage::Objects(vec![asrs_object(&[])])),
        ("mas_empty.xml", WireMessage::Mas(empty)),
        ("command.xml", WireMessage::Command(command)),
    ]
}

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}
