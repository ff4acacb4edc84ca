//! Role automata. Each agent reacts to one delivered message at a time and
//! returns the messages it wants sent; it never sees the queue or the clock
//! except through the message and the current time.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::fms::{Operation, PartKind, StationId};
use crate::petri::{Time, Value};

use super::capability::{match_capability, Calendar, Candidate};
use super::db::Database;
use super::payload::{Allocation, AvailabilityReply, Dispatch, Payload, Status, StatusEvent, TaskAnnouncement};
use super::system::MasConfig;
use super::{AgentId, AgentMessage, MesError, Performative, Role};

/// An outgoing message before the dispatcher stamps sender, seq and time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draft {
    pub receiver: AgentId,
    pub performative: Performative,
    pub conversation: String,
    pub in_reply_to: Option<u64>,
    pub payload: Payload,
}

impl Draft {
    pub fn new(receiver: AgentId, performative: Performative, conversation: impl Into<String>, payload: Payload) -> Self {
        Draft {
            receiver,
            performative,
            conversation: conversation.into(),
            in_reply_to: None,
            payload,
        }
    }

    fn reply(msg: &AgentMessage, performative: Performative, payload: Payload) -> Self {
        Draft {
            receiver: msg.sender.clone(),
            performative,
            conversation: msg.conversation_id.clone(),
            in_reply_to: Some(msg.seq),
            payload,
        }
    }
}

/// How many allocations may be in progress at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchPolicy {
    /// As many as resources allow.
    Pipelined,
    /// One at a time, shop-wide.
    Sequential,
}

/// Order in which the AM considers parked tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorityRule {
    /// Oldest order first, then part, then route stage.
    OrderFirst,
    /// Feeding the CNC first: retrievals and machining before downstream
    /// moves, each oldest order first.
    FeedBottleneck,
    /// Announcement order.
    Arrival,
}

impl DispatchPolicy {
    pub const ALL: [DispatchPolicy; 2] = [DispatchPolicy::Pipelined, DispatchPolicy::Sequential];

    pub fn as_str(self) -> &'static str {
        match self {
            DispatchPolicy::Pipelined => "pipelined",
            DispatchPolicy::Sequential => "sequential",
        }
    }
}

impl PriorityRule {
    pub const ALL: [PriorityRule; 3] = [PriorityRule::OrderFirst, PriorityRule::FeedBottleneck, PriorityRule::Arrival];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorityRule::OrderFirst => "order-first",
            PriorityRule::FeedBottleneck => "feed-bottleneck",
            PriorityRule::Arrival => "arrival",
        }
    }

    fn key(self, t: &TaskAnnouncement) -> (u64, u64, u64, u64) {
        let part = t.part.map_or(4, |(_, k)| u64::from(k.index()));
        let stage = u64::from(t.operation.stage());
        let order = u64::from(t.order_id);
        match self {
            PriorityRule::OrderFirst => (order, part, stage, t.task_id),
            PriorityRule::FeedBottleneck => {
                let class = match t.operation {
                    Operation::Machine => 0,
                    Operation::Retrieve => 1,
                    _ => 2,
                };
                (class, order, part, t.task_id)
            }
            PriorityRule::Arrival => (t.task_id, 0, 0, 0),
        }
    }
}

macro_rules! named_enum {
    ($t:ty, $what:literal) => {
        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| format!(concat!("unknown ", $what, " `{}`"), s))
            }
        }
    };
}

named_enum!(DispatchPolicy, "dispatch policy");
named_enum!(PriorityRule, "priority rule");

pub(crate) fn task_conversation(task_id: u64) -> String {
    format!("task-{task_id}")
}

pub(crate) fn dispatch_conversation(task_id: u64) -> String {
    format!("dispatch-{task_id}")
}

pub(crate) fn order_conversation(order_id: u32) -> String {
    format!("order-{order_id}")
}

fn conversation_number(conv: &str) -> Option<u64> {
    conv.rsplit_once('-').and_then(|(_, n)| n.parse().ok())
}

fn order_key(order_id: u32) -> String {
    format!("order/{order_id}")
}

fn allocation_key(task_id: u64) -> String {
    format!("alloc/{task_id}")
}

/// Result of one delivery.
#[derive(Debug, Default)]
pub struct Handled {
    pub drafts: Vec<Draft>,
    /// Messages the role automaton could not use; they are ignored.
    pub anomalies: Vec<String>,
}

impl Handled {
    fn send(&mut self, d: Draft) {
        self.drafts.push(d);
    }

    fn odd(&mut self, who: &AgentId, msg: &AgentMessage) {
        self.anomalies.push(format!(
            "{who} ignored unexpected {} {} from {} in {}",
            msg.performative,
            msg.payload.kind(),
            msg.sender,
            msg.conversation_id
        ));
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Agent {
    pub id: AgentId,
    pub state: AgentState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentState {
    Sma(Sma),
    Am(Am),
    Smca(Smca),
    Db(Db),
    Ha(Ha),
    Sca(Sca),
    SmonA(SmonA),
    Ami(Ami),
    Mra(Mra),
}

impl Agent {
    pub(crate) fn new(id: AgentId, config: &MasConfig) -> Agent {
        let state = match id.role {
            Role::Sma => AgentState::Sma(Sma::default()),
            Role::Am => AgentState::Am(Am::default()),
            Role::Smca => AgentState::Smca(Smca::default()),
            Role::DbaShop | Role::DbaStation => AgentState::Db(Db::default()),
            Role::Ha => AgentState::Ha(Ha::default()),
            Role::Sca => {
                let station = id.station.expect("station-level");
                let resources = config
                    .station(station)
                    .resources
                    .iter()
                    .map(|r| (r.clone(), ResourceState::Idle))
                    .collect();
                AgentState::Sca(Sca {
                    resources,
                    pending: BTreeMap::new(),
                })
            }
            Role::SmonA => AgentState::SmonA(SmonA::default()),
            Role::Ami => AgentState::Ami(Ami::default()),
            Role::Mra => {
                let station = id.station.expect("station-level");
                AgentState::Mra(Mra {
                    resource: config.station(station).resources[id.instance as usize].clone(),
                    current: None,
                    completed: 0,
                })
            }
        };
        Agent { id, state }
    }

    /// Reacts to `msg`, which must be addressed to this agent.
    pub fn handle_message(&mut self, msg: &AgentMessage, now: Time, config: &MasConfig) -> Result<Handled, MesError> {
        if msg.receiver != self.id {
            return Err(MesError::UnknownAgent(format!(
                "{} delivered to {}",
                msg.receiver, self.id
            )));
        }
        let mut out = Handled::default();
        let id = &self.id;
        match &mut self.state {
            AgentState::Sma(s) => s.handle(id, msg, now, config, &mut out),
            AgentState::Am(s) => s.handle(id, msg, now, config, &mut out)?,
            AgentState::Smca(s) => s.handle(id, msg, &mut out),
            AgentState::Db(s) => s.handle(id, msg, now, &mut out),
            AgentState::Ha(s) => s.handle(id, msg, config, &mut out),
            AgentState::Sca(s) => s.handle(id, msg, now, config, &mut out),
            AgentState::SmonA(s) => s.handle(id, msg, config, &mut out),
            AgentState::Ami(s) => s.handle(id, msg, &mut out),
            AgentState::Mra(s) => s.handle(id, msg, &mut out),
        }
        Ok(out)
    }
}

/// Shop management agent: owns the order queue and releases orders up to the
/// work-in-process limit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sma {
    pub pending: VecDeque<u32>,
    /// Written to the shop database, waiting for the acknowledgment.
    pub releasing: BTreeSet<u32>,
    pub active: BTreeSet<u32>,
    pub done: u32,
}

impl Sma {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, now: Time, config: &MasConfig, out: &mut Handled) {
        match (&msg.performative, &msg.payload) {
            (Performative::Inform, Payload::Orders { first, count }) => {
                self.pending.extend(*first..first + count);
            }
            (Performative::Inform, Payload::Ack { key }) => {
                let Some(order) = key.strip_prefix("order/").and_then(|o| o.parse::<u32>().ok()) else {
                    return out.odd(id, msg);
                };
                if !self.releasing.remove(&order) {
                    return out.odd(id, msg);
                }
                self.active.insert(order);
                out.send(Draft::new(
                    AgentId::shop(Role::Ha),
                    Performative::Command,
                    order_conversation(order),
                    Payload::Release { order_id: order },
                ));
            }
            (Performative::Notify, Payload::OrderDone { order_id }) => {
                if !self.active.remove(order_id) {
                    return out.odd(id, msg);
                }
                self.done += 1;
            }
            _ => return out.odd(id, msg),
        }
        while config.max_wip == 0 || ((self.active.len() + self.releasing.len()) as u32) < config.max_wip {
            let Some(order) = self.pending.pop_front() else { break };
            self.releasing.insert(order);
            out.send(Draft::new(
                AgentId::shop(Role::DbaShop),
                Performative::Request,
                order_conversation(order),
                Payload::Write {
                    key: order_key(order),
                    value: Value::record([
                        ("order", Value::Int(order.into())),
                        ("released", Value::Int(now as i64)),
                        ("parts", Value::Int(3)),
                    ]),
                },
            ));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPhase {
    /// Shop database lookup outstanding.
    Checking,
    Ready,
    /// The database had no record; looked up again on the next release.
    Refused,
    /// No station offers the required capabilities.
    Unplaceable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParkedTask {
    pub task: TaskAnnouncement,
    pub phase: TaskPhase,
    /// Seq of the HA's request, for replies.
    pub request_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InFlight {
    pub task_id: u64,
    pub key: (u64, u64, u64, u64),
    pub candidates: Vec<Candidate>,
    pub next: usize,
}

/// Agent manager: owns allocation. Tasks wait in a priority queue; one
/// availability query is in flight at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Am {
    pub parked: BTreeMap<(u64, u64, u64, u64), ParkedTask>,
    pub keys: BTreeMap<u64, (u64, u64, u64, u64)>,
    pub db_pending: u32,
    pub in_flight: Option<InFlight>,
    /// Capability sets every candidate refused since the last release.
    pub blocked: BTreeSet<String>,
    /// Allocated and not yet released.
    pub active: BTreeMap<u64, Allocation>,
    pub calendar: Calendar,
    pub allocations: BTreeMap<u64, Allocation>,
}

impl Am {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, now: Time, config: &MasConfig, out: &mut Handled) -> Result<(), MesError> {
        let task_id = conversation_number(&msg.conversation_id);
        match (&msg.performative, &msg.payload) {
            (Performative::Request, Payload::Task(task)) => {
                if task.check().is_err() || self.keys.contains_key(&task.task_id) || self.allocations.contains_key(&task.task_id) {
                    out.odd(id, msg);
                    out.send(Draft::reply(msg, Performative::Refuse, msg.payload.clone()));
                    return Ok(());
                }
                let key = config.priority.key(task);
                self.keys.insert(task.task_id, key);
                self.parked.insert(
                    key,
                    ParkedTask {
                        task: task.clone(),
                        phase: TaskPhase::Checking,
                        request_seq: msg.seq,
                    },
                );
                self.db_pending += 1;
                out.send(Draft::new(
                    AgentId::shop(Role::DbaShop),
                    Performative::Query,
                    msg.conversation_id.clone(),
                    Payload::Lookup {
                        key: order_key(task.order_id),
                    },
                ));
                return Ok(());
            }
            (Performative::Inform, Payload::Record { record, .. }) => {
                let Some(p) = task_id.and_then(|t| self.keys.get(&t)).and_then(|k| self.parked.get_mut(k)) else {
                    out.odd(id, msg);
                    return Ok(());
                };
                if p.phase != TaskPhase::Checking {
                    out.odd(id, msg);
                    return Ok(());
                }
                self.db_pending -= 1;
                if record.is_some() {
                    p.phase = TaskPhase::Ready;
                } else {
                    p.phase = TaskPhase::Refused;
                    out.send(Draft {
                        receiver: AgentId::shop(Role::Ha),
                        performative: Performative::Refuse,
                        conversation: msg.conversation_id.clone(),
                        in_reply_to: Some(p.request_seq),
                        payload: Payload::Task(p.task.clone()),
                    });
                }
            }
            (Performative::Propose, Payload::Availability(reply)) => {
                let Some(f) = self.in_flight.take_if(|f| Some(f.task_id) == task_id && reply.available) else {
                    out.odd(id, msg);
                    return Ok(());
                };
                let parked = self.parked.remove(&f.key).expect("in-flight task is parked");
                self.keys.remove(&f.task_id);
                let start = now.max(reply.earliest_start.unwrap_or(now));
                let allocation = Allocation {
                    task_id: f.task_id,
                    station: reply.station,
                    resources: reply.resources.clone(),
                    start,
                    end: start + parked.task.operation.duration(&config.fms),
                };
                self.calendar
                    .allocate(&allocation.resources, allocation.task_id, allocation.start, allocation.end)?;
                self.active.insert(f.task_id, allocation.clone());
                self.allocations.insert(f.task_id, allocation.clone());
                let payload = Payload::Allocation {
                    task: parked.task,
                    allocation,
                };
                out.send(Draft::reply(msg, Performative::Accept, payload.clone()));
                out.send(Draft::new(
                    AgentId::shop(Role::DbaShop),
                    Performative::Inform,
                    msg.conversation_id.clone(),
                    payload,
                ));
            }
            (Performative::Refuse, Payload::Availability(reply)) => {
                let Some(f) = self.in_flight.as_mut().filter(|f| Some(f.task_id) == task_id && !reply.available) else {
                    out.odd(id, msg);
                    return Ok(());
                };
                f.next += 1;
                if let Some(c) = f.candidates.get(f.next) {
                    let parked = &self.parked[&f.key];
                    out.send(availability_query(&parked.task, c.station, config));
                    return Ok(());
                }
                let parked = &self.parked[&f.key];
                self.blocked.insert(parked.task.required_capabilities.join("+"));
                self.in_flight = None;
            }
            (Performative::Notify, Payload::Status(s)) if s.event == StatusEvent::Completed => {
                if self.active.remove(&s.task_id).is_none() {
                    out.odd(id, msg);
                    return Ok(());
                }
                self.calendar.finish(s.task_id, now);
                if let Some(a) = self.allocations.get_mut(&s.task_id) {
                    a.end = now.max(a.start);
                }
                self.blocked.clear();
                for p in self.parked.values_mut().filter(|p| p.phase == TaskPhase::Refused) {
                    p.phase = TaskPhase::Checking;
                    self.db_pending += 1;
                    out.send(Draft::new(
                        AgentId::shop(Role::DbaShop),
                        Performative::Query,
                        task_conversation(p.task.task_id),
                        Payload::Lookup {
                            key: order_key(p.task.order_id),
                        },
                    ));
                }
            }
            _ => {
                out.odd(id, msg);
                return Ok(());
            }
        }
        self.round(now, config, out);
        Ok(())
    }

    /// Starts the next availability query, if the AM is free to.
    fn round(&mut self, now: Time, config: &MasConfig, out: &mut Handled) {
        if self.in_flight.is_some() || self.db_pending > 0 {
            return;
        }
        if config.policy == DispatchPolicy::Sequential && !self.active.is_empty() {
            return;
        }
        let mut unplaceable = Vec::new();
        let mut next = None;
        for (key, p) in &self.parked {
            if p.phase != TaskPhase::Ready || self.blocked.contains(&p.task.required_capabilities.join("+")) {
                continue;
            }
            match match_capability(&p.task.required_capabilities, &config.capabilities, &config.layout, &self.calendar, now) {
                Ok(candidates) => {
                    next = Some((*key, candidates));
                    break;
                }
                Err(_) => unplaceable.push(*key),
            }
        }
        for key in unplaceable {
            let p = self.parked.get_mut(&key).expect("key from parked");
            p.phase = TaskPhase::Unplaceable;
            out.send(Draft {
                receiver: AgentId::shop(Role::Ha),
                performative: Performative::Refuse,
                conversation: task_conversation(p.task.task_id),
                in_reply_to: Some(p.request_seq),
                payload: Payload::Task(p.task.clone()),
            });
        }
        if let Some((key, candidates)) = next {
            let task = &self.parked[&key].task;
            out.send(availability_query(task, candidates[0].station, config));
            self.in_flight = Some(InFlight {
                task_id: task.task_id,
                key,
                candidates,
                next: 0,
            });
        }
    }
}

fn availability_query(task: &TaskAnnouncement, station: StationId, config: &MasConfig) -> Draft {
    Draft::new(
        AgentId::station(Role::Sca, station),
        Performative::Query,
        task_conversation(task.task_id),
        Payload::AvailabilityQuery {
            task_id: task.task_id,
            capabilities: task.required_capabilities.clone(),
            duration: task.operation.duration(&config.fms),
        },
    )
}

/// Shop monitoring and command agent: follows task completions and tells the
/// SMA when an order is stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Smca {
    pub completed_tasks: u64,
    pub failures: u64,
    pub repairs: u64,
    pub orders_done: u32,
}

impl Smca {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, out: &mut Handled) {
        let (Performative::Notify, Payload::Status(s)) = (&msg.performative, &msg.payload) else {
            return out.odd(id, msg);
        };
        match s.event {
            StatusEvent::Completed => {
                self.completed_tasks += 1;
                if s.operation == Operation::Store {
                    self.orders_done += 1;
                    out.send(Draft::new(
                        AgentId::shop(Role::Sma),
                        Performative::Notify,
                        order_conversation(s.order_id),
                        Payload::OrderDone { order_id: s.order_id },
                    ));
                }
            }
            StatusEvent::Failed => self.failures += 1,
            StatusEvent::Repaired => self.repairs += 1,
            StatusEvent::Started => out.odd(id, msg),
        }
    }
}

/// Database agent (shop or station).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Db {
    pub db: Database,
    pub writes: u64,
}

impl Db {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, now: Time, out: &mut Handled) {
        match (&msg.performative, &msg.payload) {
            (Performative::Query, Payload::Lookup { key }) => {
                let record = self.db.query(key).cloned();
                out.send(Draft::reply(
                    msg,
                    Performative::Inform,
                    Payload::Record {
                        key: key.clone(),
                        record,
                    },
                ));
            }
            (Performative::Request, Payload::Write { key, value }) => {
                self.put(key, value.clone(), now);
                out.send(Draft::reply(msg, Performative::Inform, Payload::Ack { key: key.clone() }));
            }
            (Performative::Inform, Payload::Allocation { task, allocation }) if id.role == Role::DbaShop => {
                self.put(&allocation_key(task.task_id), msg.payload.to_value(), now);
                out.send(Draft::new(
                    AgentId::station(Role::Sca, allocation.station),
                    Performative::Inform,
                    msg.conversation_id.clone(),
                    msg.payload.clone(),
                ));
            }
            _ => out.odd(id, msg),
        }
    }

    /// Applies a write; stamps follow delivery order.
    pub fn put(&mut self, key: &str, value: Value, now: Time) {
        self.db.write(key, value, now, self.writes);
        self.writes += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourceState {
    Idle,
    /// Offered to a task, awaiting its requirements.
    Reserved(u64),
    Busy(u64),
    Down(u64),
}

/// Station control agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sca {
    pub resources: BTreeMap<String, ResourceState>,
    /// Requirements waiting for the station database acknowledgment.
    pub pending: BTreeMap<u64, (TaskAnnouncement, Allocation)>,
}

impl Sca {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, now: Time, config: &MasConfig, out: &mut Handled) {
        let station = id.station.expect("station-level");
        match (&msg.performative, &msg.payload) {
            (Performative::Query, Payload::AvailabilityQuery { task_id, capabilities, .. }) => {
                let mut chosen: Vec<String> = Vec::new();
                for cap in capabilities {
                    let free = config
                        .capabilities
                        .iter()
                        .filter(|r| &r.capability == cap)
                        .map(|r| &r.resource)
                        .filter(|r| self.resources.get(*r) == Some(&ResourceState::Idle))
                        .min();
                    match free {
                        Some(r) if !chosen.contains(r) => chosen.push(r.clone()),
                        Some(_) => {}
                        None => {
                            chosen.clear();
                            break;
                        }
                    }
                }
                if chosen.is_empty() {
                    out.send(Draft::reply(
                        msg,
                        Performative::Refuse,
                        Payload::Availability(AvailabilityReply {
                            task_id: *task_id,
                            station,
                            available: false,
                            earliest_start: None,
                            resources: Vec::new(),
                        }),
                    ));
                } else {
                    for r in &chosen {
                        self.resources.insert(r.clone(), ResourceState::Reserved(*task_id));
                    }
                    out.send(Draft::reply(
                        msg,
                        Performative::Propose,
                        Payload::Availability(AvailabilityReply {
                            task_id: *task_id,
                            station,
                            available: true,
                            earliest_start: Some(now),
                            resources: chosen,
                        }),
                    ));
                }
            }
            (Performative::Accept, Payload::Allocation { allocation, .. }) => {
                let held = allocation
                    .resources
                    .iter()
                    .all(|r| self.resources.get(r) == Some(&ResourceState::Reserved(allocation.task_id)));
                if !held {
                    out.odd(id, msg);
                }
            }
            (Performative::Inform, Payload::Allocation { task, allocation }) => {
                self.pending.insert(task.task_id, (task.clone(), allocation.clone()));
                out.send(Draft::new(
                    AgentId::station(Role::DbaStation, station),
                    Performative::Request,
                    dispatch_conversation(task.task_id),
                    Payload::Write {
                        key: allocation_key(task.task_id),
                        value: msg.payload.to_value(),
                    },
                ));
            }
            (Performative::Inform, Payload::Ack { .. }) => {
                let Some((task, allocation)) = conversation_number(&msg.conversation_id).and_then(|t| self.pending.remove(&t)) else {
                    return out.odd(id, msg);
                };
                for r in &allocation.resources {
                    self.resources.insert(r.clone(), ResourceState::Busy(task.task_id));
                }
                let resource = allocation.resources[0].clone();
                out.send(Draft::new(
                    config.mra_for(&resource),
                    Performative::Command,
                    msg.conversation_id.clone(),
                    Payload::Dispatch(Dispatch {
                        task_id: task.task_id,
                        order_id: task.order_id,
                        part: task.part,
                        operation: task.operation,
                        station,
                        resource,
                    }),
                ));
            }
            (Performative::Inform, Payload::Status(s)) => {
                let held: Vec<String> = self
                    .resources
                    .iter()
                    .filter(|(_, st)| matches!(st, ResourceState::Busy(t) | ResourceState::Down(t) if *t == s.task_id))
                    .map(|(r, _)| r.clone())
                    .collect();
                if held.is_empty() {
                    return out.odd(id, msg);
                }
                let next = match s.event {
                    StatusEvent::Completed => ResourceState::Idle,
                    StatusEvent::Failed => ResourceState::Down(s.task_id),
                    StatusEvent::Repaired => ResourceState::Busy(s.task_id),
                    StatusEvent::Started => return out.odd(id, msg),
                };
                for r in held {
                    self.resources.insert(r, next);
                }
                if s.event == StatusEvent::Completed {
                    out.send(Draft::new(
                        AgentId::shop(Role::Am),
                        Performative::Notify,
                        msg.conversation_id.clone(),
                        msg.payload.clone(),
                    ));
                }
            }
            _ => out.odd(id, msg),
        }
    }
}

/// Station monitoring agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SmonA {
    pub last: BTreeMap<String, (StatusEvent, Time)>,
}

impl SmonA {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, config: &MasConfig, out: &mut Handled) {
        let (Performative::Notify, Payload::Status(s)) = (&msg.performative, &msg.payload) else {
            return out.odd(id, msg);
        };
        self.last.insert(s.resource.clone(), (s.event, s.at));
        if s.event == StatusEvent::Started {
            return;
        }
        let station = id.station.expect("station-level");
        out.send(Draft::new(
            AgentId::station(Role::Sca, station),
            Performative::Inform,
            msg.conversation_id.clone(),
            msg.payload.clone(),
        ));
        if s.event == StatusEvent::Completed {
            out.send(Draft::new(
                config.mra_for(&s.resource),
                Performative::Inform,
                msg.conversation_id.clone(),
                msg.payload.clone(),
            ));
        }
    }
}

/// Agent-machine interface: hands dispatches to the hybrid agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ami {
    pub forwarded: u64,
}

impl Ami {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, out: &mut Handled) {
        let (Performative::Command, Payload::Dispatch(_)) = (&msg.performative, &msg.payload) else {
            return out.odd(id, msg);
        };
        self.forwarded += 1;
        out.send(Draft::new(
            AgentId::shop(Role::Ha),
            Performative::Command,
            msg.conversation_id.clone(),
            msg.payload.clone(),
        ));
    }
}

/// Manufacturing resource agent, one per resource.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mra {
    pub resource: String,
    pub current: Option<u64>,
    pub completed: u64,
}

impl Mra {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, out: &mut Handled) {
        let station = id.station.expect("station-level");
        match (&msg.performative, &msg.payload) {
            (Performative::Command, Payload::Dispatch(d)) if self.current.is_none() => {
                self.current = Some(d.task_id);
                out.send(Draft::new(
                    AgentId::station(Role::Ami, station),
                    Performative::Command,
                    msg.conversation_id.clone(),
                    msg.payload.clone(),
                ));
                out.send(Draft::new(
                    AgentId::station(Role::SmonA, station),
                    Performative::Notify,
                    msg.conversation_id.clone(),
                    Payload::Status(Status {
                        task_id: d.task_id,
                        order_id: d.order_id,
                        operation: d.operation,
                        resource: self.resource.clone(),
                        event: StatusEvent::Started,
                        at: msg.sent_at,
                    }),
                ));
            }
            (Performative::Inform, Payload::Status(s)) if s.event == StatusEvent::Completed && self.current == Some(s.task_id) => {
                self.current = None;
                self.completed += 1;
            }
            _ => out.odd(id, msg),
        }
    }
}

/// Hybrid agent, MAS side: announces route tasks for released orders and
/// collects dispatch decisions for the simulator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ha {
    pub next_task: u64,
    /// Announced and not yet completed.
    pub tasks: BTreeMap<u64, TaskAnnouncement>,
    /// Dispatched, keyed by (operation, order, part or 0).
    pub running: BTreeMap<(Operation, u32, u32), Dispatch>,
    /// Parts of each order that reached the assembly station.
    pub at_assembly: BTreeMap<u32, u8>,
    pub outbox: Vec<Dispatch>,
    pub refusals: u64,
}

impl Ha {
    fn handle(&mut self, id: &AgentId, msg: &AgentMessage, config: &MasConfig, out: &mut Handled) {
        match (&msg.performative, &msg.payload) {
            (Performative::Command, Payload::Release { order_id }) => {
                for kind in PartKind::ALL {
                    let part = Some((crate::fms::part_id(*order_id, kind), kind));
                    self.announce(*order_id, part, Operation::Retrieve, out);
                }
            }
            (Performative::Command, Payload::Dispatch(d)) => {
                let key = (d.operation, d.order_id, d.part.map_or(0, |p| p.0));
                if !self.tasks.contains_key(&d.task_id) || self.running.contains_key(&key) {
                    return out.odd(id, msg);
                }
                self.running.insert(key, d.clone());
                self.outbox.push(d.clone());
            }
            (Performative::Refuse, Payload::Task(_)) => self.refusals += 1,
            _ => out.odd(id, msg),
        }
        let _ = config;
    }

    pub(crate) fn announce(&mut self, order_id: u32, part: Option<(u32, PartKind)>, op: Operation, out: &mut Handled) -> u64 {
        self.next_task += 1;
        let task = TaskAnnouncement::new(self.next_task, order_id, part, op);
        self.tasks.insert(task.task_id, task.clone());
        out.send(Draft::new(
            AgentId::shop(Role::Am),
            Performative::Request,
            task_conversation(task.task_id),
            Payload::Task(task),
        ));
        self.next_task
    }

    /// Handles a simulator signal about the operation keyed by
    /// `(op, order, part)`. Completions also announce the next route tasks.
    pub(crate) fn signal(
        &mut self,
        op: Operation,
        order_id: u32,
        part: u32,
        event: StatusEvent,
        now: Time,
        out: &mut Handled,
    ) -> Result<u64, MesError> {
        let key = (op, order_id, part);
        let d = match event {
            StatusEvent::Completed => self.running.remove(&key),
            _ => self.running.get(&key).cloned(),
        }
        .ok_or_else(|| MesError::Divergence {
            at: now,
            message: format!("simulator reported {} of {op} for order {order_id} part {part}, which was never dispatched", event.as_str()),
        })?;
        let status = Payload::Status(Status {
            task_id: d.task_id,
            order_id,
            operation: op,
            resource: d.resource.clone(),
            event,
            at: now,
        });
        let conv = dispatch_conversation(d.task_id);
        out.send(Draft::new(AgentId::station(Role::SmonA, d.station), Performative::Notify, conv.clone(), status.clone()));
        out.send(Draft::new(AgentId::shop(Role::Smca), Performative::Notify, conv, status));
        if event != StatusEvent::Completed {
            return Ok(d.task_id);
        }
        self.tasks.remove(&d.task_id);
        match op {
            Operation::Retrieve => {
                self.announce(order_id, d.part, Operation::Machine, out);
            }
            Operation::Machine => {
                self.announce(order_id, d.part, Operation::MoveToAssembly, out);
            }
            Operation::MoveToAssembly => {
                let n = self.at_assembly.entry(order_id).or_default();
                *n += 1;
                if *n == 3 {
                    self.at_assembly.remove(&order_id);
                    self.announce(order_id, None, Operation::Assemble, out);
                }
            }
            Operation::Assemble => {
                self.announce(order_id, None, Operation::Store, out);
            }
            Operation::Store => {}
        }
        Ok(d.task_id)
    }
}
