//! Re-checking a recorded joint trace offline.

use std::collections::{BTreeMap, BTreeSet};

use crate::bridge::{audit, operation_of, parse, translate_event, JointTrace, ObjectRegistry, Translation, WireMessage};
use crate::fms::{places, FmsConfig, Operation};
use crate::mes::{StatusEvent, Violation};
use crate::petri::{EventKind, Value};

use super::{compute_kpis, KpiReport, MetricsError};

#[derive(Debug)]
pub struct ReplayReport {
    pub lines: usize,
    pub events: usize,
    pub commands: usize,
    pub messages: u64,
    pub updates: u64,
    pub violations: Vec<Violation>,
    /// Coupling audit plus notifications that answer no open command.
    pub problems: Vec<String>,
    pub kpis: KpiReport,
}

/// Replays the lines of a full joint trace: conformance over the messages,
/// the command/notification audit and the KPIs. `orders` defaults to the
/// highest order id commanded.
pub fn replay(text: &str, orders: Option<u32>) -> Result<ReplayReport, MetricsError> {
    let mut trace = JointTrace::new(false);
    let registry = ObjectRegistry::new(&FmsConfig::default());
    let mut open: BTreeMap<(Operation, u32, u32), u64> = BTreeMap::new();
    let mut problems = Vec::new();
    let mut resources = BTreeSet::new();
    let mut lines = 0;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        lines += 1;
        let bad = |what: String| MetricsError::Invalid(format!("line {}: {what}", n + 1));
        match parse(line.as_bytes()).map_err(|e| bad(e.to_string()))? {
            WireMessage::Event(e) => {
                if e.kind == EventKind::TokenCreated
                    && e.payload.field("place").and_then(Value::as_str).is_some_and(|p| places::RESOURCE_POOLS.contains(&p))
                {
                    if let Some(name) = e.payload.field("color").and_then(Value::as_str) {
                        resources.insert(name.to_string());
                    }
                }
                if let Translation::Notify {
                    operation,
                    order_id,
                    part,
                    event,
                } = translate_event(&e, &registry)
                {
                    let key = (operation, order_id, part);
                    match open.get(&key) {
                        Some(&task) => {
                            trace.notifications.push((task, event));
                            if event == StatusEvent::Completed {
                                open.remove(&key);
                            }
                        }
                        None => problems.push(format!(
                            "line {}: {operation} of order {order_id} part {part} has no open command",
                            n + 1
                        )),
                    }
                }
                trace.push_sim(&e);
            }
            WireMessage::Command(c) => {
                let op = operation_of(&c.action).ok_or_else(|| bad(format!("unknown action `{}`", c.action)))?;
                let part = if op.per_order() { 0 } else { c.part.map_or(0, |p| p.0) };
                open.insert((op, c.order_id, part), c.task_id);
                trace.push_command(&c);
            }
            WireMessage::Message(m) => trace.push_message(m),
            WireMessage::Update(u) => trace.push_update(u),
            other => return Err(bad(format!("unexpected {} in a joint trace", kind(&other)))),
        }
    }
    let orders = orders.unwrap_or_else(|| trace.commands.iter().map(|c| c.order_id).max().unwrap_or(0));
    let resources: Vec<String> = resources.into_iter().collect();
    let kpis = compute_kpis(&trace.events, orders, &resources);
    let violations = trace.conformance(kpis.incomplete.is_empty());
    problems.extend(audit(&trace));
    Ok(ReplayReport {
        lines,
        events: trace.events.len(),
        commands: trace.commands.len(),
        messages: trace.messages,
        updates: trace.updates,
        violations,
        problems,
        kpis,
    })
}

fn kind(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Mas(_) => "MAS",
        WireMessage::Agent(_) => "AGENT",
        WireMessage::Object(_) => "OBJECT",
        WireMessage::Objects(_) => "OBJECTS-LIST",
        WireMessage::Step { .. } => "STEP",
        WireMessage::StepResult { .. } => "STEP-RESULT",
        WireMessage::Setup { .. } => "SETUP",
        WireMessage::Net(_) => "NET",
        WireMessage::Message(_) | WireMessage::Command(_) | WireMessage::Update(_) | WireMessage::Event(_) => "entry",
    }
}
