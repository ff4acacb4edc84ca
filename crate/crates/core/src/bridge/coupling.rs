//! Translation between agent decisions and simulator events, and the
//! lock-step loop that couples the two.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::fms::{
    object_name, places, release_orders, stations, transitions, FmsConfig, Operation, StationId,
};
use crate::mes::{
    default_capabilities, AgentMessage, ConformanceChecker, Dispatch, Mas, MasConfig, StatusEvent, Violation,
};
use crate::petri::{EventKind, InitialToken, NetModel, SimEvent, Time, Value};

use super::link::{HsaLink, StepReply};
use super::protocol::{ActionCommand, ActionEntry, Descriptor, StateEntry, StateUpdate, StepOutcome, WireMessage};
use super::{action_name, BridgeError};

/// What the simulator knows about one resource object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectInfo {
    pub resource: String,
    pub station: StationId,
    pub actions: Vec<&'static str>,
}

/// Resource objects by wire name (`CNC`, `ROBOT`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRegistry {
    objects: BTreeMap<String, ObjectInfo>,
}

impl ObjectRegistry {
    pub fn new(config: &FmsConfig) -> Self {
        let caps = default_capabilities(config);
        let mut objects = BTreeMap::new();
        for s in stations(config) {
            for r in &s.resources {
                let actions = Operation::ALL
                    .into_iter()
                    .filter(|op| caps.iter().any(|c| &c.resource == r && c.capability == op.capability()))
                    .map(action_name)
                    .collect();
                objects.insert(
                    object_name(r),
                    ObjectInfo {
                        resource: r.clone(),
                        station: s.id,
                        actions,
                    },
                );
            }
        }
        ObjectRegistry { objects }
    }

    pub fn get(&self, object: &str) -> Option<&ObjectInfo> {
        self.objects.get(object)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    /// OBJECT descriptors, every object idle at time 0.
    pub fn descriptors(&self) -> Vec<Descriptor> {
        self.objects
            .iter()
            .map(|(name, info)| Descriptor {
                name: name.clone(),
                attributes: vec![
                    ("resource".to_string(), info.resource.clone()),
                    ("station".to_string(), info.station.to_string()),
                ],
                current_state: Some(StateEntry {
                    name: "idle".to_string(),
                    time: 0,
                }),
                actions: info
                    .actions
                    .iter()
                    .map(|a| ActionEntry {
                        name: a.to_string(),
                        params: Vec::new(),
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Turns a dispatch into the command that unlocks it in the simulator.
pub fn translate_decision(d: &Dispatch, registry: &ObjectRegistry, now: Time) -> Result<ActionCommand, BridgeError> {
    let target = object_name(&d.resource);
    let info = registry
        .get(&target)
        .ok_or_else(|| BridgeError::UnknownObject(target.clone()))?;
    let action = action_name(d.operation);
    if !info.actions.contains(&action) {
        return Err(BridgeError::UnknownAction {
            object: target,
            action: action.to_string(),
        });
    }
    Ok(ActionCommand {
        target,
        action: action.to_string(),
        task_id: d.task_id,
        order_id: d.order_id,
        part: d.part,
        issued_at: now,
    })
}

/// What the hybrid agent makes of one simulator event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Translation {
    /// Completion, failure or repair: the agents are told.
    Notify {
        operation: Operation,
        order_id: u32,
        /// Part id, 0 for order-level operations.
        part: u32,
        event: StatusEvent,
    },
    /// A token arrived somewhere; recorded, nobody is notified.
    Update { station: Option<StationId>, update: StateUpdate },
    Ignore,
}

fn place_station(place: &str) -> Option<StationId> {
    use places::*;
    match place {
        IN_TRANSIT_S1 | S1_IN | CNC_CHECK | CNC_BUSY | CNC_DOWN | S1_OUT => Some(StationId::Machining),
        IN_TRANSIT_S2 | S2_IN | ASSEMBLING | S2_OUT => Some(StationId::Assembly),
        ASRS_PARTS | IN_TRANSIT_S3 | ASRS_PRODUCTS => Some(StationId::Asrs),
        _ => None,
    }
}

fn int_field(v: &Value, name: &str) -> Option<u32> {
    v.field(name).and_then(Value::as_int).and_then(|i| u32::try_from(i).ok())
}

/// Notification policy: the firings that finish an operation, and failure
/// and repair events, notify; created tokens become state updates;
/// everything else (starts, consumed tokens, injected commands) is ignored.
pub fn translate_event(e: &SimEvent, registry: &ObjectRegistry) -> Translation {
    let notify = |operation: Operation, event: StatusEvent| {
        match int_field(&e.payload, "order") {
            Some(order_id) => Translation::Notify {
                operation,
                order_id,
                part: int_field(&e.payload, "part").unwrap_or(0),
                event,
            },
            None => Translation::Ignore,
        }
    };
    match e.kind {
        EventKind::Fire => {
            let t = e.transition.as_deref().unwrap_or("");
            match transitions::COMPLETIONS.iter().find(|(name, _)| *name == t) {
                Some((_, op)) => notify(*op, StatusEvent::Completed),
                None => Translation::Ignore,
            }
        }
        EventKind::Failure => notify(Operation::Machine, StatusEvent::Failed),
        EventKind::Repair => notify(Operation::Machine, StatusEvent::Repaired),
        EventKind::TokenCreated => {
            let place = e.payload.field("place").and_then(Value::as_str).unwrap_or("");
            let Some(color) = e.payload.field("color") else { return Translation::Ignore };
            if place == places::COMMANDS {
                return Translation::Ignore;
            }
            let (object, state, station) = if let Some(name) = color.as_str() {
                let station = registry.get(name).map(|i| i.station);
                (name.to_string(), "idle".to_string(), station)
            } else if let Some(part) = int_field(color, "part") {
                (format!("PART-{part}"), place.to_string(), place_station(place))
            } else if let Some(order) = int_field(color, "order") {
                (format!("ORDER-{order}"), place.to_string(), place_station(place))
            } else {
                ("HSA".to_string(), place.to_string(), None)
            };
            Translation::Update {
                station,
                update: StateUpdate {
                    object,
                    state,
                    at: e.time,
                    payload: color.clone(),
                },
            }
        }
        EventKind::ExternalNotify => Translation::Update {
            station: None,
            update: StateUpdate {
                object: "HSA".to_string(),
                state: "notice".to_string(),
                at: e.time,
                payload: e.payload.clone(),
            },
        },
        EventKind::TokenConsumed | EventKind::ExternalCommand => Translation::Ignore,
    }
}

/// The cell net with every order's tokens as initial tokens.
pub fn cell_model(config: &FmsConfig) -> Result<NetModel, BridgeError> {
    let mut model = crate::fms::build_fms_net(config)?;
    for o in release_orders(config) {
        for inj in o.injections() {
            model.initial.push(InitialToken {
                place: inj.place,
                color: inj.color,
                time: o.release_time,
            });
        }
    }
    Ok(model)
}

/// One entry of the joint trace.
#[derive(Debug, Clone, PartialEq)]
pub enum JointEntry {
    Sim(SimEvent),
    Message(AgentMessage),
    Command(ActionCommand),
    Update(StateUpdate),
}

impl JointEntry {
    fn wire(&self) -> WireMessage {
        match self {
            JointEntry::Sim(e) => WireMessage::Event(e.clone()),
            JointEntry::Message(m) => WireMessage::Message(m.clone()),
            JointEntry::Command(c) => WireMessage::Command(c.clone()),
            JointEntry::Update(u) => WireMessage::Update(u.clone()),
        }
    }
}

impl fmt::Display for JointEntry {
    /// One canonical XML document per entry.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bytes = super::protocol::serialize(&self.wire()).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&bytes))
    }
}

/// Both sides of a coupled run in delivery order. Simulator events and
/// commands are always kept; messages and updates only with `full`, though
/// every message passes the conformance checker either way.
#[derive(Debug)]
pub struct JointTrace {
    full: bool,
    pub entries: Vec<JointEntry>,
    pub events: Vec<SimEvent>,
    pub commands: Vec<ActionCommand>,
    /// `(task, event)` for every notification the hybrid agent passed on.
    pub notifications: Vec<(u64, StatusEvent)>,
    pub messages: u64,
    pub updates: u64,
    checker: ConformanceChecker,
}

impl JointTrace {
    pub fn new(full: bool) -> Self {
        JointTrace {
            full,
            entries: Vec::new(),
            events: Vec::new(),
            commands: Vec::new(),
            notifications: Vec::new(),
            messages: 0,
            updates: 0,
            checker: ConformanceChecker::new(),
        }
    }

    pub fn push_sim(&mut self, e: &SimEvent) {
        if self.full {
            self.entries.push(JointEntry::Sim(e.clone()));
        }
        self.events.push(e.clone());
    }

    pub fn push_message(&mut self, m: AgentMessage) {
        self.messages += 1;
        self.checker.feed(&m);
        if self.full {
            self.entries.push(JointEntry::Message(m));
        }
    }

    pub fn push_command(&mut self, c: &ActionCommand) {
        if self.full {
            self.entries.push(JointEntry::Command(c.clone()));
        }
        self.commands.push(c.clone());
    }

    pub fn push_update(&mut self, u: StateUpdate) {
        self.updates += 1;
        if self.full {
            self.entries.push(JointEntry::Update(u));
        }
    }

    /// Protocol violations among the messages seen so far.
    pub fn violations(&self) -> &[Violation] {
        self.checker.violations()
    }

    /// All violations, including conversations left open with `complete`.
    /// Ends checking: later messages start from a fresh checker.
    pub fn conformance(&mut self, complete: bool) -> Vec<Violation> {
        std::mem::take(&mut self.checker).finish(complete)
    }

    /// Conversations that reached a final state.
    pub fn finished_conversations(&self) -> u64 {
        self.checker.finished()
    }

    pub fn checked_messages(&self) -> usize {
        self.checker.checked()
    }

    /// One line per entry (full traces only).
    pub fn write_lines(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }
}

/// The control side of a coupled run.
pub trait Controller {
    /// Called once, before the first step.
    fn start(&mut self, trace: &mut JointTrace) -> Result<(), BridgeError>;
    /// Settles everything due at `now`; returns the commands to apply.
    fn decide(&mut self, now: Time, trace: &mut JointTrace) -> Result<Vec<ActionCommand>, BridgeError>;
    /// Takes in one simulator step.
    fn observe(&mut self, reply: &StepReply, trace: &mut JointTrace) -> Result<(), BridgeError>;
    /// Dispatched operations the simulator has not finished.
    fn outstanding(&self) -> usize;
}

/// The agent layer behind the hybrid agent.
pub struct AgentController {
    mas: Mas,
    registry: ObjectRegistry,
    orders: u32,
}

impl AgentController {
    pub fn new(config: MasConfig) -> Result<Self, BridgeError> {
        let registry = ObjectRegistry::new(&config.fms);
        let orders = config.fms.order_count;
        Ok(AgentController {
            mas: Mas::new(config)?,
            registry,
            orders,
        })
    }

    pub fn mas(&self) -> &Mas {
        &self.mas
    }

    pub fn registry(&self) -> &ObjectRegistry {
        &self.registry
    }

    fn drain(&mut self, trace: &mut JointTrace) {
        for m in self.mas.take_transcript() {
            trace.push_message(m);
        }
    }
}

impl Controller for AgentController {
    fn start(&mut self, _trace: &mut JointTrace) -> Result<(), BridgeError> {
        if self.orders > 0 {
            self.mas.receive_orders(1, self.orders)?;
        }
        Ok(())
    }

    fn decide(&mut self, now: Time, trace: &mut JointTrace) -> Result<Vec<ActionCommand>, BridgeError> {
        self.mas.advance_to(now)?;
        self.mas.run()?;
        self.drain(trace);
        self.mas
            .take_dispatches()
            .iter()
            .map(|d| translate_decision(d, &self.registry, now))
            .collect()
    }

    fn observe(&mut self, reply: &StepReply, trace: &mut JointTrace) -> Result<(), BridgeError> {
        for e in &reply.events {
            trace.push_sim(e);
            match translate_event(e, &self.registry) {
                Translation::Notify {
                    operation,
                    order_id,
                    part,
                    event,
                } => {
                    self.mas.advance_to(e.time)?;
                    let task = self.mas.signal(operation, order_id, part, event)?;
                    trace.notifications.push((task, event));
                }
                Translation::Update { station, update } => {
                    if let Some(s) = station {
                        let key = format!("state/{}", update.object);
                        let value = Value::record([
                            ("state", Value::str(update.state.clone())),
                            ("at", Value::Int(update.at as i64)),
                            ("payload", update.payload.clone()),
                        ]);
                        self.mas.advance_to(e.time)?;
                        self.mas.write_record(Some(s), &key, value)?;
                    }
                    trace.push_update(update);
                }
                Translation::Ignore => {}
            }
        }
        Ok(())
    }

    fn outstanding(&self) -> usize {
        self.mas.ha().running.len()
    }
}

/// How a coupled run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledOutcome {
    /// Nothing can fire and no decision is pending.
    Quiescent { at: Time },
    /// The next event lies beyond the horizon.
    Horizon { at: Time },
}

impl CoupledOutcome {
    pub fn at(self) -> Time {
        match self {
            CoupledOutcome::Quiescent { at } | CoupledOutcome::Horizon { at } => at,
        }
    }
}

/// Runs both sides in lock step until quiescence or `until`: settle the
/// agents at the current instant, hand their commands to the simulator, let
/// it fire one binding, translate what happened, repeat.
pub fn step_coupled(
    link: &mut dyn HsaLink,
    controller: &mut dyn Controller,
    until: Time,
    trace: &mut JointTrace,
) -> Result<CoupledOutcome, BridgeError> {
    controller.start(trace)?;
    let mut now = 0;
    loop {
        let commands = controller.decide(now, trace)?;
        for c in &commands {
            trace.push_command(c);
        }
        let reply = link.step(&commands, until)?;
        if reply.now < now {
            return Err(BridgeError::Divergence {
                at: now,
                message: format!("simulator clock went back to {}", reply.now),
            });
        }
        now = reply.now;
        controller.observe(&reply, trace)?;
        match reply.outcome {
            StepOutcome::Fired => {}
            StepOutcome::Deadlock => {
                // Agents might still react to the last events.
                let more = controller.decide(now, trace)?;
                if more.is_empty() {
                    return Ok(CoupledOutcome::Quiescent { at: now });
                }
                for c in &more {
                    trace.push_command(c);
                }
                let reply = link.step(&more, until)?;
                now = reply.now;
                controller.observe(&reply, trace)?;
                if reply.outcome != StepOutcome::Fired {
                    return Ok(match reply.outcome {
                        StepOutcome::Horizon => CoupledOutcome::Horizon { at: now },
                        _ => CoupledOutcome::Quiescent { at: now },
                    });
                }
            }
            StepOutcome::Horizon => return Ok(CoupledOutcome::Horizon { at: now }),
        }
    }
}

/// Coupling soundness: every command answers exactly one dispatch, and
/// every completion, failure and repair in the simulator was passed on
/// exactly once. Returns the problems found.
pub fn audit(trace: &JointTrace) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for c in &trace.commands {
        if !seen.insert(c.task_id) {
            out.push(format!("task {} commanded twice", c.task_id));
        }
    }
    let count = |kind: EventKind, pred: &dyn Fn(&SimEvent) -> bool| {
        trace.events.iter().filter(|e| e.kind == kind && pred(e)).count()
    };
    let completions = count(EventKind::Fire, &|e| {
        transitions::COMPLETIONS
            .iter()
            .any(|(t, _)| e.transition.as_deref() == Some(*t))
    });
    let failures = count(EventKind::Failure, &|_| true);
    let repairs = count(EventKind::Repair, &|_| true);
    let notified = |ev: StatusEvent| trace.notifications.iter().filter(|(_, e)| *e == ev).count();
    for (what, sim, told) in [
        ("completions", completions, notified(StatusEvent::Completed)),
        ("failures", failures, notified(StatusEvent::Failed)),
        ("repairs", repairs, notified(StatusEvent::Repaired)),
    ] {
        if sim != told {
            out.push(format!("{sim} {what} in the simulator, {told} passed on"));
        }
    }
    let mut completed = BTreeSet::new();
    for (task, ev) in &trace.notifications {
        if *ev == StatusEvent::Completed && !completed.insert(*task) {
            out.push(format!("task {task} completed twice"));
        }
        if !seen.contains(task) {
            out.push(format!("task {task} notified without a command"));
        }
    }
    out
}

/// Orders stored by the end of `events`, with their completion times.
pub fn completions(events: &[SimEvent]) -> BTreeMap<u32, Time> {
    events
        .iter()
        .filter(|e| e.kind == EventKind::Fire && e.transition.as_deref() == Some(transitions::STORE))
        .filter_map(|e| Some((int_field(&e.payload, "order")?, e.time)))
        .collect()
}

/// The agent population as a MAS descriptor.
pub fn mas_descriptor(name: &str, mas: &Mas, registry: &ObjectRegistry) -> super::protocol::MasDescriptor {
    let agents = mas
        .agents()
        .map(|a| {
            let mut attributes = vec![("role".to_string(), a.id.role.to_string())];
            if let Some(s) = a.id.station {
                attributes.push(("station".to_string(), s.to_string()));
            }
            Descriptor {
                name: a.id.to_string(),
                attributes,
                current_state: Some(StateEntry {
                    name: "active".to_string(),
                    time: mas.now(),
                }),
                actions: Vec::new(),
            }
        })
        .collect();
    super::protocol::MasDescriptor {
        name: name.to_string(),
        agents,
        objects: registry.descriptors(),
        states: ["idle", "busy", "down"]
            .map(|s| StateEntry {
                name: s.to_string(),
                time: 0,
            })
            .to_vec(),
        actions: Operation::ALL
            .map(|op| ActionEntry {
                name: action_name(op).to_string(),
                params: Vec::new(),
            })
            .to_vec(),
    }
}
