//! Message contents. Every payload maps to a record [`Value`] tagged with a
//! kind name, which is what goes on the wire.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::fms::{Operation, PartKind, StationId};
use crate::petri::{Time, Value};

use super::db::DatabaseRecord;
use super::MesError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskAnnouncement {
    pub task_id: u64,
    pub order_id: u32,
    /// Part id and kind; `None` for order-level work (assembly, storage).
    pub part: Option<(u32, PartKind)>,
    pub operation: Operation,
    pub required_capabilities: Vec<String>,
    pub deadline: Option<Time>,
}

impl TaskAnnouncement {
    pub fn new(task_id: u64, order_id: u32, part: Option<(u32, PartKind)>, operation: Operation) -> Self {
        TaskAnnouncement {
            task_id,
            order_id,
            part,
            operation,
            required_capabilities: vec![operation.capability().to_string()],
            deadline: None,
        }
    }

    pub fn check(&self) -> Result<(), MesError> {
        if self.required_capabilities.is_empty() {
            return Err(MesError::MalformedTask(format!("task {} requires no capability", self.task_id)));
        }
        if self.operation.per_order() == self.part.is_some() {
            return Err(MesError::MalformedTask(format!(
                "task {}: {} {} a part",
                self.task_id,
                self.operation,
                if self.part.is_some() { "cannot name" } else { "needs" }
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityReply {
    pub task_id: u64,
    pub station: StationId,
    pub available: bool,
    /// Present iff `available`.
    pub earliest_start: Option<Time>,
    /// Resources held for the task while the offer stands.
    pub resources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub task_id: u64,
    pub station: StationId,
    pub resources: Vec<String>,
    pub start: Time,
    /// Planned end; replaced by the actual end once the task completes.
    pub end: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub task_id: u64,
    pub order_id: u32,
    pub part: Option<(u32, PartKind)>,
    pub operation: Operation,
    pub station: StationId,
    pub resource: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StatusEvent {
    Started,
    Completed,
    Failed,
    Repaired,
}

impl StatusEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            StatusEvent::Started => "started",
            StatusEvent::Completed => "completed",
            StatusEvent::Failed => "failed",
            StatusEvent::Repaired => "repaired",
        }
    }
}

impl FromStr for StatusEvent {
    type Err = MesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            StatusEvent::Started,
            StatusEvent::Completed,
            StatusEvent::Failed,
            StatusEvent::Repaired,
        ]
        .into_iter()
        .find(|e| e.as_str() == s)
        .ok_or_else(|| MesError::BadPayload(format!("unknown status `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Status {
    pub task_id: u64,
    pub order_id: u32,
    pub operation: Operation,
    pub resource: String,
    pub event: StatusEvent,
    pub at: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Orders `first..first+count` have arrived.
    Orders { first: u32, count: u32 },
    Release { order_id: u32 },
    OrderDone { order_id: u32 },
    Task(TaskAnnouncement),
    Lookup { key: String },
    /// Answer to a lookup; `None` is the negative result.
    Record {
        key: String,
        record: Option<DatabaseRecord>,
    },
    Write { key: String, value: Value },
    Ack { key: String },
    AvailabilityQuery {
        task_id: u64,
        capabilities: Vec<String>,
        duration: Time,
    },
    Availability(AvailabilityReply),
    Allocation {
        task: TaskAnnouncement,
        allocation: Allocation,
    },
    Dispatch(Dispatch),
    Status(Status),
}

impl Payload {
    pub const KINDS: [&'static str; 13] = [
        "orders",
        "release",
        "order-done",
        "task",
        "lookup",
        "record",
        "write",
        "ack",
        "availability-query",
        "availability",
        "allocation",
        "dispatch",
        "status",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Orders { .. } => "orders",
            Payload::Release { .. } => "release",
            Payload::OrderDone { .. } => "order-done",
            Payload::Task(_) => "task",
            Payload::Lookup { .. } => "lookup",
            Payload::Record { .. } => "record",
            Payload::Write { .. } => "write",
            Payload::Ack { .. } => "ack",
            Payload::AvailabilityQuery { .. } => "availability-query",
            Payload::Availability(_) => "availability",
            Payload::Allocation { .. } => "allocation",
            Payload::Dispatch(_) => "dispatch",
            Payload::Status(_) => "status",
        }
    }

    pub fn to_value(&self) -> Value {
        let mut r = Rec::default();
        match self {
            Payload::Orders { first, count } => {
                r.int("first", *first).int("count", *count);
            }
            Payload::Release { order_id } | Payload::OrderDone { order_id } => {
                r.int("order", *order_id);
            }
            Payload::Task(t) => {
                task_fields(&mut r, t);
            }
            Payload::Lookup { key } | Payload::Ack { key } => {
                r.str("key", key);
            }
            Payload::Record { key, record } => {
                r.str("key", key).put("found", Value::Bool(record.is_some()));
                if let Some(rec) = record {
                    r.put("value", rec.value.clone())
                        .int("updated", rec.last_updated)
                        .int("stamp", rec.stamp);
                }
            }
            Payload::Write { key, value } => {
                r.str("key", key).put("value", value.clone());
            }
            Payload::AvailabilityQuery {
                task_id,
                capabilities,
                duration,
            } => {
                r.int("task", *task_id)
                    .str("capabilities", &capabilities.join(","))
                    .int("duration", *duration);
            }
            Payload::Availability(a) => {
                r.int("task", a.task_id)
                    .str("station", a.station.as_str())
                    .put("available", Value::Bool(a.available))
                    .str("resources", &a.resources.join(","));
                if let Some(t) = a.earliest_start {
                    r.int("earliest", t);
                }
            }
            Payload::Allocation { task, allocation } => {
                task_fields(&mut r, task);
                r.str("station", allocation.station.as_str())
                    .str("resources", &allocation.resources.join(","))
                    .int("start", allocation.start)
                    .int("end", allocation.end);
            }
            Payload::Dispatch(d) => {
                r.int("task", d.task_id)
                    .int("order", d.order_id)
                    .str("operation", d.operation.as_str())
                    .str("station", d.station.as_str())
                    .str("resource", &d.resource);
                part_fields(&mut r, d.part);
            }
            Payload::Status(s) => {
                r.int("task", s.task_id)
                    .int("order", s.order_id)
                    .str("operation", s.operation.as_str())
                    .str("resource", &s.resource)
                    .str("event", s.event.as_str())
                    .int("at", s.at);
            }
        }
        Value::Record(r.0)
    }

    pub fn from_value(kind: &str, v: &Value) -> Result<Payload, MesError> {
        let f = Fields(v);
        Ok(match kind {
            "orders" => Payload::Orders {
                first: f.int("first")?,
                count: f.int("count")?,
            },
            "release" => Payload::Release {
                order_id: f.int("order")?,
            },
            "order-done" => Payload::OrderDone {
                order_id: f.int("order")?,
            },
            "task" => Payload::Task(f.task()?),
            "lookup" => Payload::Lookup { key: f.str("key")? },
            "ack" => Payload::Ack { key: f.str("key")? },
            "record" => {
                let key = f.str("key")?;
                let record = if f.bool("found")? {
                    Some(DatabaseRecord {
                        key: key.clone(),
                        value: f.get("value")?.clone(),
                        last_updated: f.int("updated")?,
                        stamp: f.int("stamp")?,
                    })
                } else {
                    None
                };
                Payload::Record { key, record }
            }
            "write" => Payload::Write {
                key: f.str("key")?,
                value: f.get("value")?.clone(),
            },
            "availability-query" => Payload::AvailabilityQuery {
                task_id: f.int("task")?,
                capabilities: f.list("capabilities")?,
                duration: f.int("duration")?,
            },
            "availability" => Payload::Availability(AvailabilityReply {
                task_id: f.int("task")?,
                station: f.station()?,
                available: f.bool("available")?,
                earliest_start: f.opt_int("earliest")?,
                resources: f.list("resources")?,
            }),
            "allocation" => Payload::Allocation {
                task: f.task()?,
                allocation: Allocation {
                    task_id: f.int("task")?,
                    station: f.station()?,
                    resources: f.list("resources")?,
                    start: f.int("start")?,
                    end: f.int("end")?,
                },
            },
            "dispatch" => Payload::Dispatch(Dispatch {
                task_id: f.int("task")?,
                order_id: f.int("order")?,
                part: f.part()?,
                operation: f.operation()?,
                station: f.station()?,
                resource: f.str("resource")?,
            }),
            "status" => Payload::Status(Status {
                task_id: f.int("task")?,
                order_id: f.int("order")?,
                operation: f.operation()?,
                resource: f.str("resource")?,
                event: f.str("event")?.parse()?,
                at: f.int("at")?,
            }),
            other => return Err(MesError::BadPayload(format!("unknown payload kind `{other}`"))),
        })
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind(), self.to_value())
    }
}

fn task_fields(r: &mut Rec, t: &TaskAnnouncement) {
    r.int("task", t.task_id)
        .int("order", t.order_id)
        .str("operation", t.operation.as_str())
        .str("capabilities", &t.required_capabilities.join(","));
    part_fields(r, t.part);
    if let Some(d) = t.deadline {
        r.int("deadline", d);
    }
}

fn part_fields(r: &mut Rec, part: Option<(u32, PartKind)>) {
    if let Some((id, kind)) = part {
        r.int("part", id).str("kind", kind.as_str());
    }
}

#[derive(Default)]
struct Rec(BTreeMap<String, Value>);

impl Rec {
    fn put(&mut self, k: &str, v: Value) -> &mut Self {
        self.0.insert(k.to_string(), v);
        self
    }

    fn int(&mut self, k: &str, v: impl Into<u64>) -> &mut Self {
        let v: u64 = v.into();
        self.put(k, Value::Int(v as i64))
    }

    fn str(&mut self, k: &str, v: &str) -> &mut Self {
        self.put(k, Value::str(v))
    }
}

struct Fields<'a>(&'a Value);

impl Fields<'_> {
    fn get(&self, k: &str) -> Result<&Value, MesError> {
        self.0
            .field(k)
            .ok_or_else(|| MesError::BadPayload(format!("missing field `{k}` in {}", self.0)))
    }

    fn int<T: TryFrom<i64>>(&self, k: &str) -> Result<T, MesError> {
        self.get(k)?
            .as_int()
            .and_then(|i| T::try_from(i).ok())
            .ok_or_else(|| MesError::BadPayload(format!("field `{k}` is not a valid integer")))
    }

    fn opt_int<T: TryFrom<i64>>(&self, k: &str) -> Result<Option<T>, MesError> {
        match self.0.field(k) {
            None => Ok(None),
            Some(_) => self.int(k).map(Some),
        }
    }

    fn bool(&self, k: &str) -> Result<bool, MesError> {
        self.get(k)?
            .as_bool()
            .ok_or_else(|| MesError::BadPayload(format!("field `{k}` is not a boolean")))
    }

    fn str(&self, k: &str) -> Result<String, MesError> {
        self.get(k)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| MesError::BadPayload(format!("field `{k}` is not a string")))
    }

    fn list(&self, k: &str) -> Result<Vec<String>, MesError> {
        let s = self.str(k)?;
        Ok(s.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect())
    }

    fn station(&self) -> Result<StationId, MesError> {
        self.str("station")?.parse().map_err(MesError::BadPayload)
    }

    fn operation(&self) -> Result<Operation, MesError> {
        self.str("operation")?.parse().map_err(MesError::BadPayload)
    }

    fn part(&self) -> Result<Option<(u32, PartKind)>, MesError> {
        match self.opt_int::<u32>("part")? {
            None => Ok(None),
            Some(id) => {
                let kind = self.str("kind")?.parse().map_err(|e: crate::fms::FmsError| MesError::BadPayload(e.to_string()))?;
                Ok(Some((id, kind)))
            }
        }
    }

    fn task(&self) -> Result<TaskAnnouncement, MesError> {
        Ok(TaskAnnouncement {
            task_id: self.int("task")?,
            order_id: self.int("order")?,
            part: self.part()?,
            operation: self.operation()?,
            required_capabilities: self.list("capabilities")?,
            deadline: self.opt_int("deadline")?,
        })
    }
}
