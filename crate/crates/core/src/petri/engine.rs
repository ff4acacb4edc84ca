//! Timed firing semantics: binding search, firing, clock advance and runs.

use std::ops::Range;
use std::sync::Arc;

use super::expr::Env;
use super::net::{CompiledTransition, Marking, Net, PlaceId, TokenStore, TransitionId};
use super::rng::SimRng;
use super::trace::{EventKind, EventTrace, RunOutcome, SimEvent};
use super::value::Value;
use super::{KernelError, Time};

/// A choice of input tokens for one transition: the color taken by each input
/// arc (in arc order) and the variables those colors bind.
///
/// The derived ordering is the canonical binding order used for tie-breaks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Binding {
    pub tokens: Vec<(PlaceId, Value, u32)>,
    pub vars: Env,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnabledBinding {
    pub transition: TransitionId,
    pub binding: Binding,
    pub enabling_time: Time,
}

type Leaf = (Env, Vec<(usize, Value, u32)>);

/// All color-level bindings of `t` over `store`, guard not yet applied.
pub(crate) fn search<S: TokenStore>(t: &CompiledTransition, store: &S) -> Vec<Leaf> {
    let mut out = Vec::new();
    let mut assigned: Vec<Option<Value>> = vec![None; t.inputs.len()];
    let mut env = Env::new();
    extend(t, store, &mut env, &mut assigned, t.inputs.len(), &mut out);
    out
}

fn taken(t: &CompiledTransition, assigned: &[Option<Value>], place: usize, color: &Value) -> u32 {
    t.inputs
        .iter()
        .zip(assigned)
        .filter(|(arc, a)| arc.place == place && a.as_ref() == Some(color))
        .map(|(arc, _)| arc.count)
        .sum()
}

fn extend<S: TokenStore>(
    t: &CompiledTransition,
    store: &S,
    env: &mut Env,
    assigned: &mut Vec<Option<Value>>,
    remaining: usize,
    out: &mut Vec<Leaf>,
) {
    if remaining == 0 {
        let tokens = t
            .inputs
            .iter()
            .zip(assigned.iter())
            .map(|(arc, v)| (arc.place, v.clone().expect("all arcs assigned"), arc.count))
            .collect();
        out.push((env.clone(), tokens));
        return;
    }

    // Join order: an arc whose pattern is fully determined first (a direct
    // lookup), otherwise the unassigned arc over the fewest distinct colors.
    let mut pick = None;
    for (i, arc) in t.inputs.iter().enumerate() {
        if assigned[i].is_none() {
            if let Some(v) = arc.pattern.ground(env) {
                pick = Some((i, Some(v)));
                break;
            }
        }
    }
    let (i, ground) = pick.unwrap_or_else(|| {
        let i = (0..t.inputs.len())
            .filter(|&i| assigned[i].is_none())
            .min_by_key(|&i| store.distinct_count(t.inputs[i].place))
            .expect("remaining > 0");
        (i, None)
    });
    let arc = &t.inputs[i];

    let candidates: Vec<Value> = match ground {
        Some(v) => vec![v],
        None => {
            let mut cs = Vec::new();
            store.for_each_color(arc.place, &mut |v, _| cs.push(v.clone()));
            cs
        }
    };
    let mut trail = Vec::new();
    for color in candidates {
        let free = store
            .available(arc.place, &color)
            .saturating_sub(taken(t, assigned, arc.place, &color));
        if free < arc.count {
            continue;
        }
        if arc.pattern.match_into(&color, env, &mut trail) {
            assigned[i] = Some(color);
            extend(t, store, env, assigned, remaining - 1, out);
            assigned[i] = None;
        }
        for name in trail.drain(..) {
            env.remove(&name);
        }
    }
}

pub(crate) fn guard_holds(t: &CompiledTransition, env: &Env) -> Result<bool, KernelError> {
    match &t.def.guard {
        None => Ok(true),
        Some(g) => match g.eval(env).map_err(|e| eval_err(t, e))? {
            Value::Bool(b) => Ok(b),
            other => Err(KernelError::Eval {
                transition: t.def.id.clone(),
                message: format!("guard evaluated to non-boolean {other}"),
            }),
        },
    }
}

fn eval_err(t: &CompiledTransition, e: super::expr::EvalError) -> KernelError {
    KernelError::Eval {
        transition: t.def.id.clone(),
        message: e.to_string(),
    }
}

/// Whether firing with these consumed tokens keeps every bounded output place
/// within capacity.
pub(crate) fn capacity_ok<S: TokenStore>(net: &Net, t: &CompiledTransition, store: &S, tokens: &[(usize, Value, u32)]) -> bool {
    t.outputs.iter().all(|out| match net.place(PlaceId(out.place)).capacity {
        None => true,
        Some(cap) => {
            let consumed: u32 = tokens.iter().filter(|(p, _, _)| *p == out.place).map(|(_, _, n)| n).sum();
            let produced: u32 = t.outputs.iter().filter(|o| o.place == out.place).map(|o| o.count).sum();
            store.total(out.place) - consumed + produced <= cap
        }
    })
}

fn enabling_time(marking: &Marking, tokens: &[(usize, Value, u32)]) -> Time {
    let mut at = marking.clock;
    for (i, (place, color, _)) in tokens.iter().enumerate() {
        // Aggregate arcs drawing the same color from the same place.
        if tokens[..i].iter().any(|(p, c, _)| p == place && c == color) {
            continue;
        }
        let need: u32 = tokens
            .iter()
            .filter(|(p, c, _)| p == place && c == color)
            .map(|(_, _, n)| n)
            .sum();
        let t = marking.nth_time(*place, color, need).expect("binding search checked availability");
        at = at.max(t);
    }
    at
}

fn sort_key<'a>(net: &'a Net, e: &'a EnabledBinding) -> (Time, i32, &'a Binding, usize) {
    (
        e.enabling_time,
        net.transition(e.transition).priority,
        &e.binding,
        e.transition.0,
    )
}

fn bindings_of(net: &Net, marking: &Marking, tid: usize) -> Result<Vec<EnabledBinding>, KernelError> {
    let t = &net.transitions[tid];
    let mut out = Vec::new();
    for (vars, tokens) in search(t, marking) {
        if !guard_holds(t, &vars)? || !capacity_ok(net, t, marking, &tokens) {
            continue;
        }
        let enabling_time = enabling_time(marking, &tokens);
        out.push(EnabledBinding {
            transition: TransitionId(tid),
            binding: Binding {
                tokens: tokens.into_iter().map(|(p, v, n)| (PlaceId(p), v, n)).collect(),
                vars,
            },
            enabling_time,
        });
    }
    Ok(out)
}

/// Every (transition, binding) that is or will become enabled from `marking`
/// without further firings, sorted by (enabling time, priority, binding,
/// transition declaration order).
pub fn enabled_bindings(net: &Net, marking: &Marking) -> Result<Vec<EnabledBinding>, KernelError> {
    let mut all = Vec::new();
    for tid in 0..net.transitions.len() {
        all.extend(bindings_of(net, marking, tid)?);
    }
    all.sort_by(|a, b| sort_key(net, a).cmp(&sort_key(net, b)));
    Ok(all)
}

/// The first entry of [`enabled_bindings`], without sorting the rest.
pub fn first_enabled(net: &Net, marking: &Marking) -> Result<Option<EnabledBinding>, KernelError> {
    let mut best: Option<EnabledBinding> = None;
    for tid in 0..net.transitions.len() {
        for e in bindings_of(net, marking, tid)? {
            if best.as_ref().is_none_or(|b| sort_key(net, &e) < sort_key(net, b)) {
                best = Some(e);
            }
        }
    }
    Ok(best)
}

/// Fires `binding` of `transition` at the marking's clock, mutating the
/// marking. Returned events carry `seq = 0`; callers assign sequence numbers.
pub fn fire_in_place(
    net: &Net,
    marking: &mut Marking,
    transition: TransitionId,
    binding: &Binding,
    rng: &mut SimRng,
) -> Result<Vec<SimEvent>, KernelError> {
    let t = &net.transitions[transition.0];
    let not_enabled = |reason: &str| KernelError::NotEnabled {
        transition: t.def.id.clone(),
        reason: reason.to_string(),
    };

    if binding.tokens.len() != t.inputs.len() {
        return Err(not_enabled("binding does not cover the input arcs"));
    }
    let mut env = Env::new();
    let mut trail = Vec::new();
    let mut tokens = Vec::with_capacity(t.inputs.len());
    for (arc, (place, color, count)) in t.inputs.iter().zip(&binding.tokens) {
        if arc.place != place.0 || arc.count != *count || !arc.pattern.match_into(color, &mut env, &mut trail) {
            return Err(not_enabled("binding does not match the arc inscriptions"));
        }
        tokens.push((place.0, color.clone(), *count));
    }
    if env != binding.vars {
        return Err(not_enabled("binding variables disagree with the chosen tokens"));
    }
    for (i, (place, color, _)) in tokens.iter().enumerate() {
        let need: u32 = tokens
            .iter()
            .filter(|(p, c, _)| p == place && c == color)
            .map(|(_, _, n)| n)
            .sum();
        let first = i == 0 || !tokens[..i].iter().any(|(p, c, _)| p == place && c == color);
        if first && marking.available(*place, color) < need {
            return Err(not_enabled("input tokens are missing"));
        }
    }
    if !guard_holds(t, &env)? {
        return Err(not_enabled("guard is false"));
    }
    if !capacity_ok(net, t, marking, &tokens) {
        return Err(not_enabled("an output place would exceed its capacity"));
    }
    let now = marking.clock;
    if enabling_time(marking, &tokens) > now {
        return Err(not_enabled("input tokens are not yet available"));
    }

    let delay = match t.def.delay.eval(&env).map_err(|e| eval_err(t, e))? {
        Value::Int(d) if d >= 0 => d as Time,
        other => {
            return Err(KernelError::Eval {
                transition: t.def.id.clone(),
                message: format!("delay must be a non-negative integer, got {other}"),
            })
        }
    };
    let ready = now.checked_add(delay).ok_or(KernelError::TimeOverflow)?;

    let payload = Value::Record(env.clone());
    let mut events = vec![SimEvent {
        time: now,
        seq: 0,
        kind: EventKind::Fire,
        transition: Some(t.def.id.clone()),
        payload: payload.clone(),
    }];
    for (place, color, count) in &tokens {
        for ts in marking.remove_earliest(*place, color, *count) {
            events.push(token_event(net, EventKind::TokenConsumed, now, &t.def.id, *place, color, ts));
        }
    }
    for out in &t.outputs {
        for _ in 0..out.count {
            let color = out.expr.eval_with(&env, rng).map_err(|e| eval_err(t, e))?;
            net.check_color(out.place, &color)?;
            events.push(token_event(net, EventKind::TokenCreated, now, &t.def.id, out.place, &color, ready));
            marking.insert(out.place, color, ready);
        }
    }
    if let Some(kind) = t.def.emits {
        events.push(SimEvent {
            time: now,
            seq: 0,
            kind,
            transition: Some(t.def.id.clone()),
            payload,
        });
    }
    Ok(events)
}

fn token_event(net: &Net, kind: EventKind, now: Time, transition: &str, place: usize, color: &Value, ts: Time) -> SimEvent {
    SimEvent {
        time: now,
        seq: 0,
        kind,
        transition: Some(transition.to_string()),
        payload: Value::record([
            ("place", Value::str(net.place(PlaceId(place)).id.clone())),
            ("color", color.clone()),
            ("at", Value::Int(ts as i64)),
        ]),
    }
}

/// Pure variant of [`fire_in_place`].
pub fn fire(
    net: &Net,
    marking: &Marking,
    transition: TransitionId,
    binding: &Binding,
    rng: &mut SimRng,
) -> Result<(Marking, Vec<SimEvent>), KernelError> {
    let mut next = marking.clone();
    let events = fire_in_place(net, &mut next, transition, binding, rng)?;
    Ok((next, events))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advance {
    /// Clock moved to the earliest enabling time (possibly unchanged).
    Ready(Marking),
    Deadlock,
}

/// Moves the clock to the earliest enabling time; tokens are untouched.
pub fn advance(net: &Net, marking: &Marking) -> Result<Advance, KernelError> {
    Ok(match first_enabled(net, marking)? {
        None => Advance::Deadlock,
        Some(e) => {
            let mut next = marking.clone();
            next.clock = next.clock.max(e.enabling_time);
            Advance::Ready(next)
        }
    })
}

/// External command/notify channel consulted between steps of [`run`].
pub trait Hooks {
    /// Tokens to inject at `now` before the next binding is chosen.
    fn poll(&mut self, _now: Time, _marking: &Marking) -> Vec<Injection> {
        Vec::new()
    }

    /// Events produced by the step that just fired.
    fn observe(&mut self, _events: &[SimEvent]) {}
}

/// Hooks that never inject anything.
pub struct NoHooks;

impl Hooks for NoHooks {}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub place: String,
    pub color: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Indices into [`Simulator::events`] produced by the firing.
    Fired(Range<usize>),
    Deadlock,
    Horizon,
}

/// Step-at-a-time driver owning a marking, a random stream and the trace.
#[derive(Debug, Clone)]
pub struct Simulator {
    net: Arc<Net>,
    marking: Marking,
    rng: SimRng,
    events: Vec<SimEvent>,
}

impl Simulator {
    pub fn new(net: Arc<Net>, initial: Marking, seed: u64) -> Self {
        Self {
            net,
            marking: initial,
            rng: SimRng::new(seed),
            events: Vec::new(),
        }
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn marking(&self) -> &Marking {
        &self.marking
    }

    pub fn now(&self) -> Time {
        self.marking.clock
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    fn push(&mut self, mut e: SimEvent) {
        e.seq = self.events.len() as u64;
        self.events.push(e);
    }

    /// Adds a token at the current clock, recording an external-command event.
    pub fn inject(&mut self, place: &str, color: Value) -> Result<(), KernelError> {
        let pid = self
            .net
            .place_id(place)
            .ok_or_else(|| KernelError::UnknownPlace(place.to_string()))?;
        let now = self.marking.clock;
        self.marking.add(&self.net, pid, color.clone(), now)?;
        self.push(SimEvent {
            time: now,
            seq: 0,
            kind: EventKind::ExternalCommand,
            transition: None,
            payload: Value::record([("place", Value::str(place)), ("color", color)]),
        });
        Ok(())
    }

    /// Records an outbound notification in the trace.
    pub fn note(&mut self, payload: Value) {
        let now = self.marking.clock;
        self.push(SimEvent {
            time: now,
            seq: 0,
            kind: EventKind::ExternalNotify,
            transition: None,
            payload,
        });
    }

    /// Fires the first enabled binding if it becomes enabled no later than
    /// `horizon`, advancing the clock to it.
    pub fn step(&mut self, horizon: Time) -> Result<Step, KernelError> {
        let Some(next) = first_enabled(&self.net, &self.marking)? else {
            return Ok(Step::Deadlock);
        };
        if next.enabling_time > horizon {
            return Ok(Step::Horizon);
        }
        self.marking.clock = next.enabling_time;
        let fired = fire_in_place(&self.net, &mut self.marking, next.transition, &next.binding, &mut self.rng)?;
        let start = self.events.len();
        for e in fired {
            self.push(e);
        }
        Ok(Step::Fired(start..self.events.len()))
    }

    pub fn into_trace(self, outcome: Option<RunOutcome>) -> EventTrace {
        EventTrace {
            events: self.events,
            outcome,
        }
    }
}

/// Runs `net` from `initial` until `horizon` or deadlock, consulting `hooks`
/// before every step.
pub fn run(
    net: &Net,
    initial: Marking,
    horizon: Time,
    seed: u64,
    hooks: &mut dyn Hooks,
) -> Result<EventTrace, KernelError> {
    if horizon == 0 {
        return Err(KernelError::InvalidHorizon);
    }
    let mut sim = Simulator::new(Arc::new(net.clone()), initial, seed);
    let outcome = loop {
        let now = sim.now();
        let start = sim.events.len();
        for inj in hooks.poll(now, &sim.marking) {
            sim.inject(&inj.place, inj.color)?;
        }
        if sim.events.len() > start {
            hooks.observe(&sim.events[start..]);
        }
        match sim.step(horizon)? {
            Step::Fired(range) => hooks.observe(&sim.events[range]),
            Step::Deadlock => break RunOutcome::Deadlock { at: sim.now() },
            Step::Horizon => break RunOutcome::Horizon { at: sim.now() },
        }
    };
    Ok(sim.into_trace(Some(outcome)))
}
