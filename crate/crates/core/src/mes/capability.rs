//! Capability ontology, station matching and resource calendars.

use std::collections::BTreeMap;
use std::fmt;

use crate::fms::{FmsConfig, StationId, StationSpec};
use crate::petri::{Time, Value};

use super::MesError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapabilityRecord {
    pub resource: String,
    pub capability: String,
    pub parameters: BTreeMap<String, Value>,
}

impl fmt::Display for CapabilityRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.resource, self.capability)?;
        for (k, v) in &self.parameters {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Parses `resource capability [key=value ...]`.
pub fn parse_capability(text: &str) -> Result<CapabilityRecord, String> {
    let mut words = text.split_whitespace();
    let (Some(resource), Some(capability)) = (words.next(), words.next()) else {
        return Err(format!("expected `resource capability [key=value ...]`, got `{text}`"));
    };
    let mut parameters = BTreeMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| format!("bad parameter `{w}`"))?;
        let v: Value = v.parse().map_err(|e| format!("parameter `{k}`: {e}"))?;
        parameters.insert(k.to_string(), v);
    }
    Ok(CapabilityRecord {
        resource: resource.to_string(),
        capability: capability.to_string(),
        parameters,
    })
}

/// The cell's resources and what they can do.
pub fn default_capabilities(config: &FmsConfig) -> Vec<CapabilityRecord> {
    let rec = |resource: &str, capability: &str, time: Option<Time>| CapabilityRecord {
        resource: resource.to_string(),
        capability: capability.to_string(),
        parameters: time
            .map(|t| ("process_time".to_string(), Value::Int(t as i64)))
            .into_iter()
            .collect(),
    };
    let mut out = vec![rec("cnc", "milling", Some(config.cnc_time))];
    for t in &config.transport_resources {
        out.push(rec(t, "transport", Some(config.transport_time)));
    }
    out.push(rec("glue-assembly", "assembly", Some(config.assembly_time)));
    out.push(rec("laser-qc", "inspection", None));
    out.push(rec("asrs-crane", "storage", None));
    out
}

/// A station able to take a task, with the resources it would use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub station: StationId,
    pub resources: Vec<String>,
    pub earliest_start: Time,
}

/// Stations whose resources jointly cover `required`, ranked by
/// (earliest start per `calendar`, station id). For each capability the
/// station's earliest-free resource is chosen, ties to the lower id.
pub fn match_capability(
    required: &[String],
    records: &[CapabilityRecord],
    layout: &[StationSpec],
    calendar: &Calendar,
    now: Time,
) -> Result<Vec<Candidate>, MesError> {
    let mut out = Vec::new();
    for station in layout {
        let mut chosen: Vec<String> = Vec::new();
        let mut earliest = now;
        let mut covered = true;
        for cap in required {
            let best = records
                .iter()
                .filter(|r| &r.capability == cap && station.resources.contains(&r.resource))
                .map(|r| (calendar.free_at(&r.resource, now), r.resource.as_str()))
                .min();
            match best {
                Some((t, r)) => {
                    earliest = earliest.max(t);
                    if !chosen.iter().any(|c| c == r) {
                        chosen.push(r.to_string());
                    }
                }
                None => {
                    covered = false;
                    break;
                }
            }
        }
        if covered && !required.is_empty() {
            out.push(Candidate {
                station: station.id,
                resources: chosen,
                earliest_start: earliest,
            });
        }
    }
    if out.is_empty() {
        return Err(MesError::NoCapableStation(required.to_vec()));
    }
    out.sort_by_key(|c| (c.earliest_start, c.station));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment {
    pub task_id: u64,
    pub start: Time,
    pub end: Time,
}

/// Committed half-open intervals `[start, end)` per resource.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Calendar {
    by_resource: BTreeMap<String, Vec<Commitment>>,
}

impl Calendar {
    pub fn new() -> Self {
        Self::default()
    }

    /// When `resource` has no commitment left, not before `now`.
    pub fn free_at(&self, resource: &str, now: Time) -> Time {
        self.by_resource
            .get(resource)
            .and_then(|c| c.iter().map(|c| c.end).max())
            .map_or(now, |end| end.max(now))
    }

    pub fn commitments(&self, resource: &str) -> &[Commitment] {
        self.by_resource.get(resource).map_or(&[], Vec::as_slice)
    }

    pub fn resources(&self) -> impl Iterator<Item = &str> {
        self.by_resource.keys().map(String::as_str)
    }

    /// Commits every resource for `[start, end)`; nothing changes on conflict.
    pub fn allocate(&mut self, resources: &[String], task_id: u64, start: Time, end: Time) -> Result<(), MesError> {
        for r in resources {
            if let Some(c) = self
                .commitments(r)
                .iter()
                .find(|c| start < c.end && c.start < end)
            {
                return Err(MesError::OverlapConflict {
                    resource: r.clone(),
                    task: task_id,
                    other: c.task_id,
                    start,
                    end,
                });
            }
        }
        for r in resources {
            self.by_resource.entry(r.clone()).or_default().push(Commitment {
                task_id,
                start,
                end,
            });
        }
        Ok(())
    }

    /// Replaces the planned end of `task_id` with the actual one.
    pub fn finish(&mut self, task_id: u64, at: Time) {
        for cs in self.by_resource.values_mut() {
            for c in cs.iter_mut().filter(|c| c.task_id == task_id) {
                c.end = at.max(c.start);
            }
        }
    }

    /// Every pair of overlapping commitments.
    pub fn overlaps(&self) -> Vec<MesError> {
        let mut out = Vec::new();
        for (r, cs) in &self.by_resource {
            let mut sorted = cs.clone();
            sorted.sort_by_key(|c| (c.start, c.end, c.task_id));
            // Latest-ending commitment seen so far.
            let mut reach: Option<Commitment> = None;
            for c in sorted {
                if let Some(prev) = reach {
                    if c.start < prev.end {
                        out.push(MesError::OverlapConflict {
                            resource: r.clone(),
                            task: c.task_id,
                            other: prev.task_id,
                            start: c.start,
                            end: c.end,
                        });
                    }
                }
                if reach.is_none_or(|p| c.end > p.end) {
                    reach = Some(c);
                }
            }
        }
        out
    }
}
