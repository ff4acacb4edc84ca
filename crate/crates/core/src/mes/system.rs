//! The message dispatcher and the agent population.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use crate::fms::{stations, FmsConfig, Operation, StationId, StationSpec};
use crate::petri::{Time, Value};

use super::agents::{dispatch_conversation, task_conversation, Agent, AgentState, Am, Draft, Ha, Handled, Sma};
use super::capability::{default_capabilities, Calendar, CapabilityRecord};
use super::db::Database;
use super::payload::{Allocation, Dispatch, Payload, StatusEvent, TaskAnnouncement};
use super::{AgentId, AgentMessage, DispatchPolicy, MesError, Performative, PriorityRule, Role};

/// Deliveries allowed within one simulated instant before the run is
/// declared divergent.
pub const MESSAGE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MasConfig {
    pub fms: FmsConfig,
    pub layout: Vec<StationSpec>,
    pub capabilities: Vec<CapabilityRecord>,
    pub policy: DispatchPolicy,
    pub priority: PriorityRule,
    /// Orders in process at once; 0 means no limit.
    pub max_wip: u32,
    pub budget: usize,
}

impl MasConfig {
    pub fn new(fms: FmsConfig) -> Self {
        MasConfig {
            layout: stations(&fms),
            capabilities: default_capabilities(&fms),
            fms,
            policy: DispatchPolicy::Pipelined,
            priority: PriorityRule::FeedBottleneck,
            max_wip: 3,
            budget: MESSAGE_BUDGET,
        }
    }

    pub(crate) fn station(&self, id: StationId) -> &StationSpec {
        self.layout.iter().find(|s| s.id == id).expect("station in layout")
    }

    /// The MRA of `resource`; its instance is the resource's position in
    /// the station.
    pub fn mra_for(&self, resource: &str) -> AgentId {
        self.layout
            .iter()
            .find_map(|s| {
                let i = s.resources.iter().position(|r| r == resource)?;
                Some(AgentId::mra(s.id, i as u32))
            })
            .expect("resource in layout")
    }

    fn check(&self) -> Result<(), MesError> {
        for id in StationId::ALL {
            if !self.layout.iter().any(|s| s.id == id) {
                return Err(MesError::UnknownAgent(format!("no station {id} in layout")));
            }
        }
        Ok(())
    }
}

struct Queued {
    key: (Time, u64, u64, AgentId),
    msg: AgentMessage,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// What became of one task announcement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskOutcome {
    /// The task's negotiation, in delivery order.
    pub transcript: Vec<AgentMessage>,
    pub allocation: Option<Allocation>,
}

/// Delivers messages one at a time in `(time, causal round, sender seq,
/// sender)` order. Replies to a delivery belong to the next round, so a
/// message is never overtaken by its own consequences.
pub struct Mas {
    config: MasConfig,
    agents: BTreeMap<AgentId, Agent>,
    queue: BinaryHeap<Reverse<Queued>>,
    seqs: BTreeMap<AgentId, u64>,
    now: Time,
    delivered_now: usize,
    delivered: u64,
    transcript: Vec<AgentMessage>,
    keep_transcript: bool,
    anomalies: Vec<(Time, String)>,
}

impl Mas {
    pub fn new(config: MasConfig) -> Result<Mas, MesError> {
        config.check()?;
        let mut ids = vec![
            AgentId::shop(Role::Sma),
            AgentId::shop(Role::Am),
            AgentId::shop(Role::Smca),
            AgentId::shop(Role::DbaShop),
            AgentId::shop(Role::Ha),
        ];
        for s in &config.layout {
            for role in [Role::Sca, Role::SmonA, Role::Ami, Role::DbaStation] {
                ids.push(AgentId::station(role, s.id));
            }
            for i in 0..s.resources.len() {
                ids.push(AgentId::mra(s.id, i as u32));
            }
        }
        let agents = ids
            .into_iter()
            .map(|id| (id.clone(), Agent::new(id, &config)))
            .collect();
        Ok(Mas {
            config,
            agents,
            queue: BinaryHeap::new(),
            seqs: BTreeMap::new(),
            now: 0,
            delivered_now: 0,
            delivered: 0,
            transcript: Vec::new(),
            keep_transcript: true,
            anomalies: Vec::new(),
        })
    }

    pub fn config(&self) -> &MasConfig {
        &self.config
    }

    /// Long runs may drop the transcript to save memory.
    pub fn keep_transcript(&mut self, keep: bool) {
        self.keep_transcript = keep;
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn advance_to(&mut self, t: Time) -> Result<(), MesError> {
        if t < self.now {
            return Err(MesError::Divergence {
                at: self.now,
                message: format!("clock moved back to {t}"),
            });
        }
        if t > self.now {
            self.now = t;
            self.delivered_now = 0;
        }
        Ok(())
    }

    /// Sends a message on behalf of `sender`, outside any causal chain.
    pub fn send(&mut self, sender: &AgentId, draft: Draft) -> Result<u64, MesError> {
        self.post(sender, draft, 0)
    }

    fn post(&mut self, sender: &AgentId, draft: Draft, round: u64) -> Result<u64, MesError> {
        for id in [sender, &draft.receiver] {
            if !self.agents.contains_key(id) {
                return Err(MesError::UnknownAgent(id.to_string()));
            }
        }
        let seq = self.seqs.entry(sender.clone()).or_insert(0);
        *seq += 1;
        let seq = *seq;
        let msg = AgentMessage {
            conversation_id: draft.conversation,
            sender: sender.clone(),
            receiver: draft.receiver,
            performative: draft.performative,
            in_reply_to: draft.in_reply_to,
            seq,
            payload: draft.payload,
            sent_at: self.now,
        };
        self.queue.push(Reverse(Queued {
            key: (self.now, round, seq, sender.clone()),
            msg,
        }));
        Ok(seq)
    }

    fn post_all(&mut self, sender: &AgentId, handled: Handled, round: u64) -> Result<(), MesError> {
        for a in handled.anomalies {
            self.anomalies.push((self.now, a));
        }
        for d in handled.drafts {
            self.post(sender, d, round)?;
        }
        Ok(())
    }

    /// Delivers until no message is pending; returns how many were delivered.
    pub fn run(&mut self) -> Result<usize, MesError> {
        let mut n = 0;
        while let Some(Reverse(q)) = self.queue.pop() {
            let (_, round, _, _) = q.key;
            if self.delivered_now >= self.config.budget {
                return Err(MesError::Divergence {
                    at: self.now,
                    message: format!("more than {} messages within one instant", self.config.budget),
                });
            }
            self.delivered_now += 1;
            self.delivered += 1;
            n += 1;
            let msg = q.msg;
            let agent = self.agents.get_mut(&msg.receiver).expect("checked on post");
            let handled = agent.handle_message(&msg, self.now, &self.config)?;
            let receiver = msg.receiver.clone();
            if self.keep_transcript {
                self.transcript.push(msg);
            }
            self.post_all(&receiver, handled, round + 1)?;
        }
        Ok(n)
    }

    /// The HA tells the SMA that orders `first..first+count` arrived.
    pub fn receive_orders(&mut self, first: u32, count: u32) -> Result<(), MesError> {
        let ha = AgentId::shop(Role::Ha);
        self.send(
            &ha,
            Draft::new(
                AgentId::shop(Role::Sma),
                Performative::Inform,
                "orders",
                Payload::Orders { first, count },
            ),
        )?;
        Ok(())
    }

    /// Announces `task` from the HA, runs to quiescence and reports the
    /// task's negotiation.
    pub fn start_new_task(&mut self, task: TaskAnnouncement) -> Result<TaskOutcome, MesError> {
        task.check()?;
        let ha_id = AgentId::shop(Role::Ha);
        let ha = self.ha_mut();
        if ha.tasks.contains_key(&task.task_id) {
            return Err(MesError::MalformedTask(format!("task {} already announced", task.task_id)));
        }
        ha.next_task = ha.next_task.max(task.task_id);
        ha.tasks.insert(task.task_id, task.clone());
        let conv = task_conversation(task.task_id);
        let from = self.transcript.len();
        self.send(
            &ha_id,
            Draft::new(AgentId::shop(Role::Am), Performative::Request, conv.clone(), Payload::Task(task.clone())),
        )?;
        self.run()?;
        Ok(TaskOutcome {
            transcript: self.transcript[from..]
                .iter()
                .filter(|m| m.conversation_id == conv)
                .cloned()
                .collect(),
            allocation: self.am().allocations.get(&task.task_id).cloned(),
        })
    }

    /// Reports what the simulator did with a dispatched operation. Returns
    /// the task id. Nothing is delivered until [`Mas::run`].
    pub fn signal(&mut self, op: Operation, order_id: u32, part: u32, event: StatusEvent) -> Result<u64, MesError> {
        let now = self.now;
        let mut out = Handled::default();
        let task = self.ha_mut().signal(op, order_id, part, event, now, &mut out)?;
        self.post_all(&AgentId::shop(Role::Ha), out, 0)?;
        Ok(task)
    }

    /// Dispatch decisions the HA has collected since the last call.
    pub fn take_dispatches(&mut self) -> Vec<Dispatch> {
        std::mem::take(&mut self.ha_mut().outbox)
    }

    /// Writes straight into the shop database (`None`) or a station's,
    /// bypassing messages. Observed state changes arrive this way.
    pub fn write_record(&mut self, station: Option<StationId>, key: &str, value: Value) -> Result<(), MesError> {
        let now = self.now;
        let id = match station {
            Some(s) => AgentId::station(Role::DbaStation, s),
            None => AgentId::shop(Role::DbaShop),
        };
        match self.agents.get_mut(&id).map(|a| &mut a.state) {
            Some(AgentState::Db(db)) => {
                db.put(key, value, now);
                Ok(())
            }
            _ => Err(MesError::UnknownAgent(id.to_string())),
        }
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn transcript(&self) -> &[AgentMessage] {
        &self.transcript
    }

    /// Hands over the transcript recorded so far.
    pub fn take_transcript(&mut self) -> Vec<AgentMessage> {
        std::mem::take(&mut self.transcript)
    }

    /// Messages the agents could not use.
    pub fn anomalies(&self) -> &[(Time, String)] {
        &self.anomalies
    }

    pub fn agent(&self, id: &AgentId) -> Option<&Agent> {
        self.agents.get(id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &Agent> {
        self.agents.values()
    }

    pub fn am(&self) -> &Am {
        match &self.agents[&AgentId::shop(Role::Am)].state {
            AgentState::Am(a) => a,
            _ => unreachable!("AM state"),
        }
    }

    pub fn sma(&self) -> &Sma {
        match &self.agents[&AgentId::shop(Role::Sma)].state {
            AgentState::Sma(a) => a,
            _ => unreachable!("SMA state"),
        }
    }

    pub fn ha(&self) -> &Ha {
        match &self.agents[&AgentId::shop(Role::Ha)].state {
            AgentState::Ha(a) => a,
            _ => unreachable!("HA state"),
        }
    }

    fn ha_mut(&mut self) -> &mut Ha {
        match &mut self.agents.get_mut(&AgentId::shop(Role::Ha)).expect("HA exists").state {
            AgentState::Ha(a) => a,
            _ => unreachable!("HA state"),
        }
    }

    pub fn calendar(&self) -> &Calendar {
        &self.am().calendar
    }

    pub fn allocations(&self) -> &BTreeMap<u64, Allocation> {
        &self.am().allocations
    }

    /// The shop database, or a station's with `Some(station)`.
    pub fn database(&self, station: Option<StationId>) -> &Database {
        let id = match station {
            Some(s) => AgentId::station(Role::DbaStation, s),
            None => AgentId::shop(Role::DbaShop),
        };
        match &self.agents[&id].state {
            AgentState::Db(d) => &d.db,
            _ => unreachable!("database state"),
        }
    }

    /// Messages of one conversation, in delivery order.
    pub fn conversation(&self, id: &str) -> Vec<&AgentMessage> {
        self.transcript.iter().filter(|m| m.conversation_id == id).collect()
    }

    /// The dispatch conversation of a task.
    pub fn dispatch_conversation(&self, task_id: u64) -> Vec<&AgentMessage> {
        self.conversation(&dispatch_conversation(task_id))
    }

    /// Redelivers a recorded transcript to a fresh population. Agent states
    /// other than the HA's (which also reacts to the simulator) must come
    /// out equal to the recording run's.
    pub fn replay(config: MasConfig, transcript: &[AgentMessage]) -> Result<Mas, MesError> {
        let mut mas = Mas::new(config)?;
        for m in transcript {
            mas.advance_to(m.sent_at)?;
            let agent = mas
                .agents
                .get_mut(&m.receiver)
                .ok_or_else(|| MesError::UnknownAgent(m.receiver.to_string()))?;
            let handled = agent.handle_message(m, m.sent_at, &mas.config)?;
            for a in handled.anomalies {
                mas.anomalies.push((m.sent_at, a));
            }
            mas.transcript.push(m.clone());
        }
        Ok(mas)
    }
}
