//! Experiments: the two scenarios, both controllers, KPIs and result files.

mod conventional;
mod emit;
mod replay;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::bridge::{
    cell_model, completions, step_coupled, AgentController, BridgeError, CoupledOutcome, HsaLink, InProcessHsa,
    JointTrace, PacedLink,
};
use crate::config::{ConfigError, KvFile};
use crate::fms::{places, transitions, FailureModel, FmsConfig, DEFAULT_REPAIR_TIME};
use crate::mes::{DispatchPolicy, MasConfig, PriorityRule, Violation};
use crate::petri::{EventKind, SimEvent, Time, Value};

pub use conventional::ConventionalController;
pub use emit::{compare_and_emit, read_rows, rows, verdicts, write_csv, write_json, Row, Verdict};
pub use replay::{replay, ReplayReport};

/// Failure probability of scenario B.
pub const SCENARIO_B_PROBABILITY: f64 = 0.2;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Simulated-time cap of a run.
pub const DEFAULT_HORIZON: Time = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("repeatability needs at least 2 runs, got {0}")]
    InsufficientRuns(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    /// No disturbances.
    A,
    /// CNC failures.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControllerKind {
    Agents,
    Conventional,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::A, Scenario::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        &[]
    }
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 2] = [ControllerKind::Agents, ControllerKind::Conventional];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Agents => "agents",
            ControllerKind::Conventional => "conventional",
        }
    }

    fn aliases(self) -> &'static [&'static str] {
        match self {
            ControllerKind::Agents => &["agent-mes"],
            ControllerKind::Conventional => &[],
        }
    }
}

macro_rules! named {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s) || v.aliases().iter().any(|a| a.eq_ignore_ascii_case(s)))
                    .ok_or_else(|| format!(concat!("unknown ", $what, " `{}`"), s))
            }
        }
    };
}

named!(Scenario, "scenario");
named!(ControllerKind, "controller");

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    /// Cell parameters; its failure model is replaced per scenario.
    pub base: FmsConfig,
    pub runs: usize,
    /// One per run; the first `runs` are used.
    pub seeds: Vec<u64>,
    pub failure_probability: f64,
    pub repair_time: Time,
    pub policy: DispatchPolicy,
    pub priority: PriorityRule,
    pub max_wip: u32,
    pub horizon: Time,
    /// Keep every message and update in the trace, not just simulator
    /// events and commands.
    pub full_trace: bool,
    /// Hold runs to wall-clock pace at this many simulated seconds per
    /// second. Not part of the settings file.
    pub pace: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, controller: ControllerKind) -> Self {
        let mas = MasConfig::new(FmsConfig::default());
        ScenarioConfig {
            scenario,
            controller,
            base: FmsConfig::default(),
            runs: DEFAULT_SEEDS.len(),
            seeds: DEFAULT_SEEDS.to_vec(),
            failure_probability: SCENARIO_B_PROBABILITY,
            repair_time: DEFAULT_REPAIR_TIME,
            policy: mas.policy,
            priority: mas.priority,
            max_wip: mas.max_wip,
            horizon: DEFAULT_HORIZON,
            full_trace: false,
            pace: None,
        }
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        if self.runs == 0 {
            return Err(MetricsError::Invalid("runs must be at least 1".into()));
        }
        if self.seeds.len() < self.runs {
            return Err(MetricsError::Invalid(format!(
                "{} runs need {} seeds, got {}",
                self.runs,
                self.runs,
                self.seeds.len()
            )));
        }
        if let Some(p) = self.pace {
            if !(p.is_finite() && p > 0.0) {
                return Err(MetricsError::Invalid(format!("pace must be positive, got {p}")));
            }
        }
        let mut seen = self.seeds[..self.runs].to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.runs {
            return Err(MetricsError::Invalid("run seeds must be distinct".into()));
        }
        self.fms(self.seeds[0])
            .check()
            .map_err(|e| MetricsError::Invalid(e.to_string()))
    }

    /// The cell configuration of the run with `seed`.
    pub fn fms(&self, seed: u64) -> FmsConfig {
        let mut c = self.base.clone();
        c.seed = seed;
        c.failure = match self.scenario {
            Scenario::A => None,
            Scenario::B => Some(FailureModel::cnc(self.failure_probability, self.repair_time, seed)),
        };
        c
    }

    /// Agent-layer configuration of the run with `seed`.
    pub fn mas(&self, seed: u64) -> MasConfig {
        let mut m = MasConfig::new(self.fms(seed));
        m.policy = self.policy;
        m.priority = self.priority;
        m.max_wip = self.max_wip;
        m
    }

    /// Reads a configuration file: the cell keys plus `scenario`,
    /// `controller`, `runs`, `seeds`, `failure_probability`, `repair_ms`,
    /// `policy`, `priority`, `max_wip` and `horizon_ms`.
    pub fn from_config_text(text: &str) -> Result<Self, MetricsError> {
        let mut kv = KvFile::parse(text)?;
        let mut c = ScenarioConfig::new(Scenario::A, ControllerKind::Agents);
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.take($key)? {
                    $field = v;
                }
            };
        }
        take!("scenario", c.scenario);
        take!("controller", c.controller);
        take!("runs", c.runs);
        take!("failure_probability", c.failure_probability);
        take!("repair_ms", c.repair_time);
        take!("policy", c.policy);
        take!("priority", c.priority);
        take!("max_wip", c.max_wip);
        take!("horizon_ms", c.horizon);
        if let Some(list) = kv.take_list("seeds")? {
            c.seeds = list
                .iter()
                .map(|s| s.parse().map_err(|e| MetricsError::Invalid(format!("seeds: `{s}`: {e}"))))
                .collect::<Result<_, _>>()?;
        }
        c.base = FmsConfig::take_from(&mut kv)?;
        if c.base.failure.is_some() {
            return Err(MetricsError::Invalid(
                "failures are set per scenario; use failure_probability and repair_ms".into(),
            ));
        }
        kv.finish()?;
        c.check()?;
        Ok(c)
    }

    /// Every key with its current value, readable by
    /// [`ScenarioConfig::from_config_text`].
    pub fn to_config_text(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!(
            "scenario = {}\ncontroller = {}\nruns = {}\nseeds = {}\nfailure_probability = {}\nrepair_ms = {}\n\
             policy = {}\npriority = {}\nmax_wip = {}\nhorizon_ms = {}\n{}",
            self.scenario,
            self.controller,
            self.runs,
            seeds.join(", "),
            self.failure_probability,
            self.repair_time,
            self.policy,
            self.priority,
            self.max_wip,
            self.horizon,
            FmsConfig {
                failure: None,
                ..self.base.clone()
            }
            .to_config_text()
        )
    }
}

/// Performance indicators of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiReport {
    pub orders_released: u32,
    pub orders_completed: u32,
    /// Completion minus release, per completed order.
    pub lead_times: BTreeMap<u32, Time>,
    pub lead_time_mean: Option<f64>,
    /// Orders per hour.
    pub throughput: f64,
    /// Last completion.
    pub makespan: Time,
    /// Per resource, percentage of the makespan spent out of its idle pool.
    pub utilization: BTreeMap<String, f64>,
    /// Orders that never completed.
    pub incomplete: Vec<u32>,
}

/// `[start, end)` intervals each resource spent away from its idle pool. An
/// interval still open at the end of the trace is closed at `end`.
pub fn busy_intervals(events: &[SimEvent], end: Time) -> BTreeMap<String, Vec<(Time, Time)>> {
    let mut open: BTreeMap<String, Time> = BTreeMap::new();
    let mut out: BTreeMap<String, Vec<(Time, Time)>> = BTreeMap::new();
    for e in events {
        let place = e.payload.field("place").and_then(Value::as_str);
        if !place.is_some_and(|p| places::RESOURCE_POOLS.contains(&p)) {
            continue;
        }
        let Some(name) = e.payload.field("color").and_then(Value::as_str) else { continue };
        match e.kind {
            EventKind::TokenConsumed => {
                open.insert(name.to_string(), e.time);
            }
            EventKind::TokenCreated => {
                let list = out.entry(name.to_string()).or_default();
                if let Some(start) = open.remove(name) {
                    list.push((start, e.time));
                }
            }
            _ => {}
        }
    }
    for (name, start) in open {
        out.entry(name).or_default().push((start, end.max(start)));
    }
    out
}

/// KPIs of a run over `orders` orders released at time 0, with utilization
/// of `resources` (object names).
pub fn compute_kpis(events: &[SimEvent], orders: u32, resources: &[String]) -> KpiReport {
    let lead_times = completions(events);
    let completed = lead_times.len() as u32;
    let makespan = lead_times.values().copied().max().unwrap_or(0);
    let lead_time_mean =
        (completed > 0).then(|| lead_times.values().map(|&t| t as f64).sum::<f64>() / f64::from(completed));
    let throughput = if makespan == 0 {
        0.0
    } else {
        f64::from(completed) * 3_600_000.0 / makespan as f64
    };
    let busy = busy_intervals(events, makespan);
    let utilization = resources
        .iter()
        .map(|r| {
            let total: Time = busy
                .get(r)
                .map_or(0, |v| v.iter().map(|(s, e)| e.min(&makespan).saturating_sub(*s)).sum());
            let pct = if makespan == 0 {
                0.0
            } else {
                total as f64 * 100.0 / makespan as f64
            };
            (r.clone(), pct)
        })
        .collect();
    KpiReport {
        orders_released: orders,
        orders_completed: completed,
        incomplete: (1..=orders).filter(|o| !lead_times.contains_key(o)).collect(),
        lead_times,
        lead_time_mean,
        throughput,
        makespan,
        utilization,
    }
}

/// Mean over resources of the population standard deviation of each
/// resource's utilization across runs. A resource missing from a run counts
/// as 0% there.
pub fn compute_repeatability(utilizations: &[&BTreeMap<String, f64>]) -> Result<f64, MetricsError> {
    if utilizations.len() < 2 {
        return Err(MetricsError::InsufficientRuns(utilizations.len()));
    }
    let resources: std::collections::BTreeSet<&String> = utilizations.iter().flat_map(|u| u.keys()).collect();
    if resources.is_empty() {
        return Ok(0.0);
    }
    let n = utilizations.len() as f64;
    let sd_sum: f64 = resources
        .iter()
        .map(|r| {
            let xs: Vec<f64> = utilizations.iter().map(|u| u.get(*r).copied().unwrap_or(0.0)).collect();
            let mean = xs.iter().sum::<f64>() / n;
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum();
    Ok(sd_sum / resources.len() as f64)
}

/// Counts taken from one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceStats {
    pub events: usize,
    pub commands: usize,
    pub messages: u64,
    pub notifications: usize,
    pub failures: usize,
    /// Machining attempts: every draw of the failure check.
    pub machining_attempts: usize,
    /// Conversations that reached a final state.
    pub conversations: u64,
}

#[derive(Debug)]
pub struct RunResult {
    pub scenario: Scenario,
    pub controller: ControllerKind,
    pub seed: u64,
    /// Everything needed to repeat the run.
    pub fms: FmsConfig,
    pub outcome: CoupledOutcome,
    pub kpis: KpiReport,
    pub stats: TraceStats,
    /// Protocol violations (agent runs).
    pub violations: Vec<Violation>,
    /// Coupling audit findings.
    pub audit: Vec<String>,
    /// Overlapping commitments in the agents' calendar.
    pub calendar_overlaps: usize,
    pub trace: JointTrace,
    pub wall: Duration,
}

/// Pool resources of a cell, as object names.
pub fn pool_resources(config: &FmsConfig) -> Vec<String> {
    let model = match crate::fms::build_fms_net(config) {
        Ok(m) => m,
        Err(_) => return Vec::new(),
    };
    crate::bridge::net_objects(&model).into_iter().collect()
}

/// One coupled run.
pub fn run_once(config: &ScenarioConfig, seed: u64) -> Result<RunResult, MetricsError> {
    let started = Instant::now();
    let fms = config.fms(seed);
    let local = InProcessHsa::new(cell_model(&fms)?, fms.sim_seed())?;
    let mut link: Box<dyn HsaLink> = match config.pace {
        Some(p) => Box::new(PacedLink::new(local, p)?),
        None => Box::new(local),
    };
    let mut trace = JointTrace::new(config.full_trace);
    let (outcome, calendar_overlaps) = match config.controller {
        ControllerKind::Agents => {
            let mut c = AgentController::new(config.mas(seed))?;
            let out = step_coupled(link.as_mut(), &mut c, config.horizon, &mut trace)?;
            (out, c.mas().calendar().overlaps().len())
        }
        ControllerKind::Conventional => {
            let mut c = ConventionalController::new(&fms);
            (step_coupled(link.as_mut(), &mut c, config.horizon, &mut trace)?, 0)
        }
    };
    let complete = matches!(outcome, CoupledOutcome::Quiescent { .. });
    let stats = stats(&trace, fms.failure_probability() > 0.0);
    let violations = trace.conformance(complete);
    let audit = crate::bridge::audit(&trace);
    let kpis = compute_kpis(&trace.events, fms.order_count, &pool_resources(&fms));
    Ok(RunResult {
        scenario: config.scenario,
        controller: config.controller,
        seed,
        fms,
        outcome,
        kpis,
        stats,
        violations,
        audit,
        calendar_overlaps,
        trace,
        wall: started.elapsed(),
    })
}

fn stats(trace: &JointTrace, failures_on: bool) -> TraceStats {
    let fired = |t: &str| {
        trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Fire && e.transition.as_deref() == Some(t))
            .count()
    };
    let failures = trace.events.iter().filter(|e| e.kind == EventKind::Failure).count();
    let machining_attempts = if failures_on {
        fired(transitions::CNC_START) + fired(transitions::CNC_REPAIR)
    } else {
        0
    };
    TraceStats {
        events: trace.events.len(),
        commands: trace.commands.len(),
        messages: trace.messages,
        notifications: trace.notifications.len(),
        failures,
        machining_attempts,
        conversations: trace.finished_conversations(),
    }
}

/// All runs of a scenario, in parallel, ordered by seed position.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<RunResult>, MetricsError> {
    config.check()?;
    config.seeds[..config.runs]
        .par_iter()
        .map(|&seed| run_once(config, seed))
        .collect()
}
