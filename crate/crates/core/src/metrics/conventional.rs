//! The conventional baseline: one central dispatcher with a static route and
//! strict global FIFO. Nothing is negotiated; it keeps its own books on which
//! resource is free and hands work out first come, first served. Parts of
//! order k+1 only leave storage once every part of order k has been
//! machined, and a failed machine is simply waited for.

use std::collections::{BTreeMap, VecDeque};

use crate::bridge::{
    action_name, translate_event, ActionCommand, BridgeError, Controller, JointTrace, ObjectRegistry, StepReply,
    Translation,
};
use crate::fms::{object_name, part_id, FmsConfig, Operation, PartKind};
use crate::mes::StatusEvent;
use crate::petri::Time;

type Part = Option<(u32, PartKind)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Job {
    op: Operation,
    order: u32,
    part: Part,
}

impl Job {
    fn key(&self) -> (Operation, u32, u32) {
        (self.op, self.order, self.part.map_or(0, |p| p.0))
    }
}

pub struct ConventionalController {
    registry: ObjectRegistry,
    orders: u32,
    transports: Vec<String>,
    busy: BTreeMap<String, bool>,
    /// Jobs waiting for a transport, in the order they became ready.
    transport_queue: VecDeque<Job>,
    cnc_queue: VecDeque<Job>,
    assembly_queue: VecDeque<Job>,
    /// Order whose parts are currently allowed out of storage.
    released: u32,
    machined: BTreeMap<u32, u32>,
    at_assembly: BTreeMap<u32, u32>,
    /// Running jobs: task id and resource.
    running: BTreeMap<(Operation, u32, u32), (u64, String)>,
    next_task: u64,
    completed: u32,
}

impl ConventionalController {
    pub fn new(config: &FmsConfig) -> Self {
        let transports: Vec<String> = config.transport_resources.iter().map(|r| object_name(r)).collect();
        let mut busy: BTreeMap<String, bool> = transports.iter().map(|t| (t.clone(), false)).collect();
        busy.insert(object_name("cnc"), false);
        busy.insert(object_name("glue-assembly"), false);
        ConventionalController {
            registry: ObjectRegistry::new(config),
            orders: config.order_count,
            transports,
            busy,
            transport_queue: VecDeque::new(),
            cnc_queue: VecDeque::new(),
            assembly_queue: VecDeque::new(),
            released: 0,
            machined: BTreeMap::new(),
            at_assembly: BTreeMap::new(),
            running: BTreeMap::new(),
            next_task: 1,
            completed: 0,
        }
    }

    /// Orders stored so far.
    pub fn completed(&self) -> u32 {
        self.completed
    }

    fn release_next(&mut self) {
        if self.released < self.orders {
            self.released += 1;
            let order = self.released;
            for kind in PartKind::ALL {
                self.transport_queue.push_back(Job {
                    op: Operation::Retrieve,
                    order,
                    part: Some((part_id(order, kind), kind)),
                });
            }
        }
    }

    fn start(&mut self, job: Job, resource: &str, now: Time) -> ActionCommand {
        let task_id = self.next_task;
        self.next_task += 1;
        self.busy.insert(resource.to_string(), true);
        self.running.insert(job.key(), (task_id, resource.to_string()));
        ActionCommand {
            target: resource.to_string(),
            action: action_name(job.op).to_string(),
            task_id,
            order_id: job.order,
            part: job.part,
            issued_at: now,
        }
    }

    fn finished(&mut self, job: Job) {
        match job.op {
            Operation::Retrieve => self.cnc_queue.push_back(job),
            Operation::Machine => {
                self.transport_queue.push_back(Job {
                    op: Operation::MoveToAssembly,
                    ..job
                });
                let n = self.machined.entry(job.order).or_default();
                *n += 1;
                if *n == 3 {
                    self.machined.remove(&job.order);
                    self.release_next();
                }
            }
            Operation::MoveToAssembly => {
                let n = self.at_assembly.entry(job.order).or_default();
                *n += 1;
                if *n == 3 {
                    self.at_assembly.remove(&job.order);
                    self.assembly_queue.push_back(Job {
                        op: Operation::Assemble,
                        order: job.order,
                        part: None,
                    });
                }
            }
            Operation::Assemble => self.transport_queue.push_back(Job {
                op: Operation::Store,
                order: job.order,
                part: None,
            }),
            Operation::Store => self.completed += 1,
        }
    }
}

impl Controller for ConventionalController {
    fn start(&mut self, _trace: &mut JointTrace) -> Result<(), BridgeError> {
        self.release_next();
        Ok(())
    }

    fn decide(&mut self, now: Time, _trace: &mut JointTrace) -> Result<Vec<ActionCommand>, BridgeError> {
        let mut out = Vec::new();
        while let Some(t) = self.transports.iter().find(|t| !self.busy[*t]).cloned() {
            let Some(job) = self.transport_queue.pop_front() else { break };
            out.push(self.start(job, &t, now));
        }
        let cnc = object_name("cnc");
        if !self.busy[&cnc] {
            if let Some(job) = self.cnc_queue.pop_front() {
                out.push(self.start(Job { op: Operation::Machine, ..job }, &cnc, now));
            }
        }
        let assembler = object_name("glue-assembly");
        if !self.busy[&assembler] {
            if let Some(job) = self.assembly_queue.pop_front() {
                out.push(self.start(job, &assembler, now));
            }
        }
        Ok(out)
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
                    let key = (operation, order_id, part);
                    let (task, resource) = self.running.get(&key).cloned().ok_or_else(|| BridgeError::Divergence {
                        at: e.time,
                        message: format!("{operation} of order {order_id} part {part} was never started"),
                    })?;
                    trace.notifications.push((task, event));
                    if event == StatusEvent::Completed {
                        self.running.remove(&key);
                        self.busy.insert(resource, false);
                        let part = (!operation.per_order())
                            .then(|| PartKind::ALL.into_iter().find(|k| part_id(order_id, *k) == part))
                            .flatten()
                            .map(|k| (part, k));
                        self.finished(Job {
                            op: operation,
                            order: order_id,
                            part,
                        });
                    }
                }
                Translation::Update { update, .. } => trace.push_update(update),
                Translation::Ignore => {}
            }
        }
        Ok(())
    }

    fn outstanding(&self) -> usize {
        self.running.len()
    }
}
