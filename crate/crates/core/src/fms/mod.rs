//! The three-station FMS cell: book orders, part routes, failures and the
//! timed colored net that simulates the shop floor.
//!
//! Station 1 machines parts on a CNC mill, station 2 assembles one body, one
//! handle and one cover into a book, station 3 is the AS/RS. Transport units
//! (a robot and a conveyor by default) carry parts between stations.

mod net;

use std::fmt;
use std::str::FromStr;

use crate::config::{ConfigError, KvFile};
use crate::petri::{Injection, SimRng, Time, Value};

pub use net::{build_fms_net, command_token, initial_marking, object_name, places, transitions};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FmsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown part kind `{0}`")]
    UnknownKind(String),
    #[error("part {part}: cannot go from {from} to {to}")]
    BadTransition {
        part: u32,
        from: PartState,
        to: PartState,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartKind {
    Body,
    Handle,
    Cover,
}

impl PartKind {
    pub const ALL: [PartKind; 3] = [PartKind::Body, PartKind::Handle, PartKind::Cover];

    pub fn as_str(self) -> &'static str {
        match self {
            PartKind::Body => "body",
            PartKind::Handle => "handle",
            PartKind::Cover => "cover",
        }
    }

    /// 1-based position inside an order, used to number parts.
    pub fn index(self) -> u32 {
        self as u32 + 1
    }
}

impl fmt::Display for PartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartKind {
    type Err = FmsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PartKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| FmsError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StationId {
    Machining,
    Assembly,
    Asrs,
}

impl StationId {
    pub const ALL: [StationId; 3] = [StationId::Machining, StationId::Assembly, StationId::Asrs];

    pub fn as_str(self) -> &'static str {
        match self {
            StationId::Machining => "station1-machining",
            StationId::Assembly => "station2-assembly",
            StationId::Asrs => "station3-asrs",
        }
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StationId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StationId::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown station `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationSpec {
    pub id: StationId,
    pub resources: Vec<String>,
    /// Duration of the station's processing operation; 0 for the AS/RS,
    /// whose retrieve and store are folded into transport.
    pub process_time: Time,
}

/// The cell layout for `config`.
pub fn stations(config: &FmsConfig) -> Vec<StationSpec> {
    let mut s1 = vec!["cnc".to_string()];
    let mut s3 = vec!["asrs-crane".to_string()];
    for t in &config.transport_resources {
        if t == "conveyor" {
            s3.push(t.clone());
        } else {
            s1.push(t.clone());
        }
    }
    vec![
        StationSpec {
            id: StationId::Machining,
            resources: s1,
            process_time: config.cnc_time,
        },
        StationSpec {
            id: StationId::Assembly,
            resources: vec!["glue-assembly".into(), "laser-qc".into()],
            process_time: config.assembly_time,
        },
        StationSpec {
            id: StationId::Asrs,
            resources: s3,
            process_time: 0,
        },
    ]
}

/// Station housing `resource`, if any.
pub fn station_of(config: &FmsConfig, resource: &str) -> Option<StationId> {
    stations(config)
        .into_iter()
        .find(|s| s.resources.iter().any(|r| r == resource))
        .map(|s| s.id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartState {
    Stored,
    InTransport,
    Machining,
    AwaitingAssembly,
    Assembled,
}

impl PartState {
    pub fn as_str(self) -> &'static str {
        match self {
            PartState::Stored => "stored",
            PartState::InTransport => "in-transport",
            PartState::Machining => "machining",
            PartState::AwaitingAssembly => "awaiting-assembly",
            PartState::Assembled => "assembled",
        }
    }

    /// Edges of the route graph. `InTransport` occurs twice on the route, so
    /// it has two successors.
    pub fn may_become(self, next: PartState) -> bool {
        use PartState::*;
        matches!(
            (self, next),
            (Stored, InTransport)
                | (InTransport, Machining)
                | (Machining, InTransport)
                | (InTransport, AwaitingAssembly)
                | (AwaitingAssembly, Assembled)
        )
    }
}

impl fmt::Display for PartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub part_id: u32,
    pub kind: PartKind,
    pub order_id: u32,
    pub state: PartState,
}

impl Part {
    pub fn advance(&mut self, next: PartState) -> Result<(), FmsError> {
        if !self.state.may_become(next) {
            return Err(FmsError::BadTransition {
                part: self.part_id,
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        Ok(())
    }

    /// Net token for this part.
    pub fn token(&self) -> Value {
        Value::record([
            ("part", Value::Int(self.part_id.into())),
            ("order", Value::Int(self.order_id.into())),
            ("kind", Value::str(self.kind.as_str())),
        ])
    }
}

/// Part number of `kind` within `order` (orders are 1-based).
pub fn part_id(order_id: u32, kind: PartKind) -> u32 {
    3 * (order_id - 1) + kind.index()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookOrder {
    pub order_id: u32,
    pub release_time: Time,
    /// Body, handle and cover, in that order.
    pub parts: [Part; 3],
    pub completion_time: Option<Time>,
}

impl BookOrder {
    pub fn new(order_id: u32, release_time: Time) -> Self {
        let part = |kind| Part {
            part_id: part_id(order_id, kind),
            kind,
            order_id,
            state: PartState::Stored,
        };
        BookOrder {
            order_id,
            release_time,
            parts: PartKind::ALL.map(part),
            completion_time: None,
        }
    }

    pub fn complete(&mut self, at: Time) -> Result<(), FmsError> {
        if at < self.release_time {
            return Err(FmsError::InvalidConfig(format!(
                "order {} completed at {at} before its release at {}",
                self.order_id, self.release_time
            )));
        }
        self.completion_time = Some(at);
        Ok(())
    }

    pub fn token(&self) -> Value {
        Value::record([("order", Value::Int(self.order_id.into()))])
    }

    /// The order token followed by its three part tokens.
    pub fn injections(&self) -> Vec<Injection> {
        let mut out = vec![Injection {
            place: places::ORDERS.to_string(),
            color: self.token(),
        }];
        out.extend(self.parts.iter().map(|p| Injection {
            place: places::ASRS_PARTS.to_string(),
            color: p.token(),
        }));
        out
    }
}

/// All orders of `config`, released at t=0 in order-id (arrival) order.
pub fn release_orders(config: &FmsConfig) -> Vec<BookOrder> {
    (1..=config.order_count).map(|id| BookOrder::new(id, 0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureModel {
    pub target_resource: String,
    /// Chance that one machining start fails.
    pub probability: f64,
    pub repair_time: Time,
    pub rng_seed: u64,
}

pub const DEFAULT_REPAIR_TIME: Time = 30_000;

impl FailureModel {
    pub fn cnc(probability: f64, repair_time: Time, rng_seed: u64) -> Self {
        FailureModel {
            target_resource: "cnc".into(),
            probability,
            repair_time,
            rng_seed,
        }
    }

    pub fn check(&self) -> Result<(), FmsError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(FmsError::InvalidConfig(format!(
                "failure probability {} outside [0, 1]",
                self.probability
            )));
        }
        if self.target_resource != "cnc" {
            return Err(FmsError::InvalidConfig(format!(
                "failures can only target the cnc, not `{}`",
                self.target_resource
            )));
        }
        if self.repair_time == 0 {
            return Err(FmsError::InvalidConfig("repair_time must be positive".into()));
        }
        Ok(())
    }
}

/// One Bernoulli draw for a machining start. Uses the kernel's generator
/// (ChaCha8, threshold `floor(p * 2^64)` on one 64-bit output), so it agrees
/// with the draws made inside the net.
pub fn sample_failure(model: &FailureModel, rng: &SimRng) -> (bool, SimRng) {
    let mut next = rng.clone();
    let failed = next.bernoulli(model.probability);
    (failed, next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmsConfig {
    pub order_count: u32,
    pub transport_time: Time,
    pub cnc_time: Time,
    pub assembly_time: Time,
    pub failure: Option<FailureModel>,
    pub seed: u64,
    /// Interchangeable transport units; each carries one load at a time.
    pub transport_resources: Vec<String>,
}

impl Default for FmsConfig {
    fn default() -> Self {
        FmsConfig {
            order_count: 1000,
            transport_time: 8000,
            cnc_time: 10_000,
            assembly_time: 15_000,
            failure: None,
            seed: 1,
            transport_resources: vec!["robot".into(), "conveyor".into()],
        }
    }
}

impl FmsConfig {
    pub fn check(&self) -> Result<(), FmsError> {
        for (name, v) in [
            ("transport_time", self.transport_time),
            ("cnc_time", self.cnc_time),
            ("assembly_time", self.assembly_time),
        ] {
            if v == 0 {
                return Err(FmsError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.transport_resources.is_empty() {
            return Err(FmsError::InvalidConfig("at least one transport resource is needed".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.transport_resources {
            if !r.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-') || r.is_empty() {
                return Err(FmsError::InvalidConfig(format!("bad transport resource id `{r}`")));
            }
            if ["cnc", "glue-assembly", "laser-qc", "asrs-crane"].contains(&r.as_str()) || !seen.insert(r) {
                return Err(FmsError::InvalidConfig(format!("transport resource `{r}` clashes with another resource")));
            }
        }
        if let Some(f) = &self.failure {
            f.check()?;
        }
        Ok(())
    }

    /// Seed of the simulator's random stream.
    pub fn sim_seed(&self) -> u64 {
        self.failure.as_ref().map_or(self.seed, |f| f.rng_seed)
    }

    /// Failure probability, 0 when failures are off.
    pub fn failure_probability(&self) -> f64 {
        self.failure.as_ref().map_or(0.0, |f| f.probability)
    }

    /// Reads the FMS keys of a configuration file, leaving others in `kv`.
    ///
    /// Keys: `order_count`, `transport_time`, `cnc_time`, `assembly_time`,
    /// `seed`, `transport_resources` (comma list), and `failure.probability`,
    /// `failure.repair_time`, `failure.target`, `failure.seed`. Any
    /// `failure.*` key switches failures on.
    pub fn take_from(kv: &mut KvFile) -> Result<FmsConfig, ConfigError> {
        let mut c = FmsConfig::default();
        if let Some(v) = kv.take("order_count")? {
            c.order_count = v;
        }
        if let Some(v) = kv.take("transport_time")? {
            c.transport_time = v;
        }
        if let Some(v) = kv.take("cnc_time")? {
            c.cnc_time = v;
        }
        if let Some(v) = kv.take("assembly_time")? {
            c.assembly_time = v;
        }
        if let Some(v) = kv.take("seed")? {
            c.seed = v;
        }
        if let Some(v) = kv.take_list("transport_resources")? {
            c.transport_resources = v;
        }
        if kv.has_prefix("failure.") {
            c.failure = Some(FailureModel {
                target_resource: kv.take("failure.target")?.unwrap_or_else(|| "cnc".into()),
                probability: kv.take("failure.probability")?.unwrap_or(0.0),
                repair_time: kv.take("failure.repair_time")?.unwrap_or(DEFAULT_REPAIR_TIME),
                rng_seed: kv.take("failure.seed")?.unwrap_or(c.seed),
            });
        }
        c.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }

    /// The keys understood by [`FmsConfig::take_from`], with current values.
    pub fn to_config_text(&self) -> String {
        let mut s = format!(
            "order_count = {}\ntransport_time = {}\ncnc_time = {}\nassembly_time = {}\nseed = {}\ntransport_resources = {}\n",
            self.order_count,
            self.transport_time,
            self.cnc_time,
            self.assembly_time,
            self.seed,
            self.transport_resources.join(", ")
        );
        if let Some(f) = &self.failure {
            s += &format!(
                "failure.target = {}\nfailure.probability = {}\nfailure.repair_time = {}\nfailure.seed = {}\n",
                f.target_resource, f.probability, f.repair_time, f.rng_seed
            );
        }
        s
    }
}

/// One step of a part's route through the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RouteStep {
    Retrieve,
    ToMachining,
    Machine,
    ToAssembly,
    Assemble,
    ToStorage,
    Store,
}

impl RouteStep {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteStep::Retrieve => "asrs-retrieve",
            RouteStep::ToMachining => "transport-s1",
            RouteStep::Machine => "cnc",
            RouteStep::ToAssembly => "transport-s2",
            RouteStep::Assemble => "assembly",
            RouteStep::ToStorage => "transport-s3",
            RouteStep::Store => "store",
        }
    }

    /// Station where the step ends.
    pub fn station(self) -> StationId {
        match self {
            RouteStep::Retrieve | RouteStep::ToStorage | RouteStep::Store => StationId::Asrs,
            RouteStep::ToMachining | RouteStep::Machine => StationId::Machining,
            RouteStep::ToAssembly | RouteStep::Assemble => StationId::Assembly,
        }
    }

    pub fn duration(self, config: &FmsConfig) -> Time {
        match self {
            RouteStep::Retrieve | RouteStep::Store => 0,
            RouteStep::ToMachining | RouteStep::ToAssembly | RouteStep::ToStorage => config.transport_time,
            RouteStep::Machine => config.cnc_time,
            RouteStep::Assemble => config.assembly_time,
        }
    }

    /// Whether the step is done once per order rather than once per part.
    pub fn per_order(self) -> bool {
        matches!(self, RouteStep::Assemble | RouteStep::ToStorage | RouteStep::Store)
    }
}

const ROUTE: [RouteStep; 7] = [
    RouteStep::Retrieve,
    RouteStep::ToMachining,
    RouteStep::Machine,
    RouteStep::ToAssembly,
    RouteStep::Assemble,
    RouteStep::ToStorage,
    RouteStep::Store,
];

/// Route of a part kind given by name. All kinds share the route; they only
/// meet again at assembly.
pub fn part_route(kind: &str) -> Result<Vec<RouteStep>, FmsError> {
    kind.parse::<PartKind>()?;
    Ok(ROUTE.to_vec())
}

/// A unit of work the control layer allocates and dispatches. Retrieval and
/// storage are instantaneous, so each rides on the adjacent transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operation {
    /// Retrieve from the AS/RS and carry to station 1.
    Retrieve,
    Machine,
    /// Carry from station 1 to station 2.
    MoveToAssembly,
    Assemble,
    /// Carry the book to station 3 and store it.
    Store,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Retrieve,
        Operation::Machine,
        Operation::MoveToAssembly,
        Operation::Assemble,
        Operation::Store,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Retrieve => "retrieve",
            Operation::Machine => "machine",
            Operation::MoveToAssembly => "move-assembly",
            Operation::Assemble => "assemble",
            Operation::Store => "store",
        }
    }

    pub fn capability(self) -> &'static str {
        match self {
            Operation::Retrieve | Operation::MoveToAssembly | Operation::Store => "transport",
            Operation::Machine => "milling",
            Operation::Assemble => "assembly",
        }
    }

    pub fn steps(self) -> &'static [RouteStep] {
        match self {
            Operation::Retrieve => &ROUTE[0..2],
            Operation::Machine => &ROUTE[2..3],
            Operation::MoveToAssembly => &ROUTE[3..4],
            Operation::Assemble => &ROUTE[4..5],
            Operation::Store => &ROUTE[5..7],
        }
    }

    pub fn duration(self, config: &FmsConfig) -> Time {
        self.steps().iter().map(|s| s.duration(config)).sum()
    }

    pub fn per_order(self) -> bool {
        matches!(self, Operation::Assemble | Operation::Store)
    }

    /// Position on the route, used to order work.
    pub fn stage(self) -> u32 {
        self as u32
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operation::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown operation `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn part_states_follow_the_route() {
        let mut p = BookOrder::new(1, 0).parts[0].clone();
        for s in [
            PartState::InTransport,
            PartState::Machining,
            PartState::InTransport,
            PartState::AwaitingAssembly,
            PartState::Assembled,
        ] {
            p.advance(s).unwrap();
        }
        let mut q = BookOrder::new(1, 0).parts[1].clone();
        assert!(q.advance(PartState::Machining).is_err());
    }

    #[test]
    fn operations_cover_the_route_once() {
        let steps: Vec<RouteStep> = Operation::ALL.iter().flat_map(|o| o.steps().to_vec()).collect();
        assert_eq!(steps, ROUTE.to_vec());
    }

    #[test]
    fn config_file_round_trip() {
        let mut c = FmsConfig {
            order_count: 7,
            ..FmsConfig::default()
        };
        c.failure = Some(FailureModel::cnc(0.2, 12_000, 9));
        let mut kv = KvFile::parse(&c.to_config_text()).unwrap();
        assert_eq!(FmsConfig::take_from(&mut kv).unwrap(), c);
        kv.finish().unwrap();
    }

    #[test]
    fn bad_configs_rejected() {
        let mut kv = KvFile::parse("cnc_time = 0").unwrap();
        assert!(FmsConfig::take_from(&mut kv).is_err());
        let mut kv = KvFile::parse("failure.probability = 1.5").unwrap();
        assert!(FmsConfig::take_from(&mut kv).is_err());
        let mut kv = KvFile::parse("transport_resources = robot, robot").unwrap();
        assert!(FmsConfig::take_from(&mut kv).is_err());
    }
}
