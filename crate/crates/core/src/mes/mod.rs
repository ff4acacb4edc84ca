//! Multi-agent manufacturing execution layer.
//!
//! Shop-level agents (SMA, AM, SMCA, shop database) and per-station agents
//! (SCA, SMonA, AMI, station database, one MRA per resource) exchange
//! [`AgentMessage`]s through a single deterministic dispatcher ([`Mas`]). The
//! hybrid agent (HA) is also an agent here: it turns released orders into
//! tasks and carries dispatch decisions out to the simulator.
//!
//! Allocation follows a query/accept choreography: the HA requests a task
//! from the AM, the AM checks the shop database, asks a capable station for
//! availability, accepts, records the allocation, and the shop database hands
//! the requirements to the station, which dispatches to its sub-agents.

mod agents;
mod capability;
mod conformance;
mod db;
mod payload;
mod system;

use std::fmt;
use std::str::FromStr;

use crate::fms::StationId;
use crate::petri::Time;

pub use agents::{
    Agent, AgentState, Am, Ami, Db, DispatchPolicy, Draft, Ha, Handled, InFlight, Mra, ParkedTask, PriorityRule,
    ResourceState, Sca, Sma, Smca, SmonA, TaskPhase,
};
pub use capability::{
    default_capabilities, match_capability, parse_capability, Calendar, Candidate, CapabilityRecord,
    Commitment,
};
pub use conformance::{check_transcript, ConformanceChecker, ConversationKind, Violation};
pub use db::{Database, DatabaseRecord, JournalEntry};
pub use payload::{
    Allocation, AvailabilityReply, Dispatch, Payload, Status, StatusEvent, TaskAnnouncement,
};
pub use system::{Mas, MasConfig, TaskOutcome, MESSAGE_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MesError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("malformed task: {0}")]
    MalformedTask(String),
    #[error("no station offers {}", .0.join(" + "))]
    NoCapableStation(Vec<String>),
    #[error("resource `{resource}`: task {task} [{start}, {end}) overlaps task {other}")]
    OverlapConflict {
        resource: String,
        task: u64,
        other: u64,
        start: Time,
        end: Time,
    },
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("divergence at {at} ms: {message}")]
    Divergence { at: Time, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Sma,
    Am,
    Smca,
    DbaShop,
    Ha,
    Sca,
    SmonA,
    Ami,
    Mra,
    DbaStation,
}

impl Role {
    pub const ALL: [Role; 10] = [
        Role::Sma,
        Role::Am,
        Role::Smca,
        Role::DbaShop,
        Role::Ha,
        Role::Sca,
        Role::SmonA,
        Role::Ami,
        Role::Mra,
        Role::DbaStation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Sma => "SMA",
            Role::Am => "AM",
            Role::Smca => "SMCA",
            Role::DbaShop => "DBA-shop",
            Role::Ha => "HA",
            Role::Sca => "SCA",
            Role::SmonA => "SMonA",
            Role::Ami => "AMI",
            Role::Mra => "MRA",
            Role::DbaStation => "DBA-station",
        }
    }

    pub fn station_level(self) -> bool {
        matches!(
            self,
            Role::Sca | Role::SmonA | Role::Ami | Role::Mra | Role::DbaStation
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = MesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| MesError::UnknownAgent(s.to_string()))
    }
}

/// Agent name. Written `ROLE[#instance][@station]`, e.g. `SMA`,
/// `SCA@station1-machining`, `MRA#1@station1-machining`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    pub role: Role,
    pub instance: u32,
    pub station: Option<StationId>,
}

impl AgentId {
    pub fn new(role: Role, instance: u32, station: Option<StationId>) -> Result<Self, MesError> {
        if role.station_level() != station.is_some() {
            return Err(MesError::UnknownAgent(format!(
                "{role} {} a station",
                if role.station_level() { "needs" } else { "cannot have" }
            )));
        }
        Ok(AgentId {
            role,
            instance,
            station,
        })
    }

    pub fn shop(role: Role) -> Self {
        AgentId::new(role, 0, None).expect("shop-level role")
    }

    pub fn station(role: Role, station: StationId) -> Self {
        AgentId::new(role, 0, Some(station)).expect("station-level role")
    }

    pub fn mra(station: StationId, instance: u32) -> Self {
        AgentId::new(Role::Mra, instance, Some(station)).expect("station-level role")
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.role.as_str())?;
        if self.instance != 0 {
            write!(f, "#{}", self.instance)?;
        }
        if let Some(s) = self.station {
            write!(f, "@{s}")?;
        }
        Ok(())
    }
}

impl FromStr for AgentId {
    type Err = MesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MesError::UnknownAgent(s.to_string());
        let (head, station) = match s.split_once('@') {
            Some((h, st)) => (h, Some(st.parse::<StationId>().map_err(|_| bad())?)),
            None => (s, None),
        };
        let (role, instance) = match head.split_once('#') {
            Some((r, i)) => (r, i.parse::<u32>().map_err(|_| bad())?),
            None => (head, 0),
        };
        AgentId::new(role.parse()?, instance, station).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Performative {
    Request,
    Inform,
    Query,
    Propose,
    Accept,
    Refuse,
    Command,
    Notify,
}

impl Performative {
    pub const ALL: [Performative; 8] = [
        Performative::Request,
        Performative::Inform,
        Performative::Query,
        Performative::Propose,
        Performative::Accept,
        Performative::Refuse,
        Performative::Command,
        Performative::Notify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Request => "request",
            Performative::Inform => "inform",
            Performative::Query => "query",
            Performative::Propose => "propose",
            Performative::Accept => "accept",
            Performative::Refuse => "refuse",
            Performative::Command => "command",
            Performative::Notify => "notify",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Performative {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Performative::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown performative `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentMessage {
    pub conversation_id: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub performative: Performative,
    /// `seq` of the counterpart's message this one answers.
    pub in_reply_to: Option<u64>,
    /// Per-sender sequence number, strictly increasing.
    pub seq: u64,
    pub payload: Payload,
    pub sent_at: Time,
}

impl fmt::Display for AgentMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} -> {} {}",
            self.sent_at, self.conversation_id, self.performative, self.sender, self.receiver, self.payload
        )
    }
}
