//! Declarative net structure and structural validation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::expr::{Expr, Pattern};
use super::trace::EventKind;
use super::value::{ColorSet, Value};
use super::Time;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceDef {
    pub id: String,
    pub colors: ColorSet,
    pub capacity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDef {
    pub id: String,
    pub guard: Option<Expr>,
    /// Milliseconds; evaluated over the binding.
    pub delay: Expr,
    /// Lower values win conflicts between bindings enabled at the same time.
    pub priority: i32,
    /// Extra event recorded when the transition fires (failure or repair).
    pub emits: Option<EventKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arc {
    /// place -> transition; consumes `count` tokens matching `pattern`.
    Input {
        place: String,
        transition: String,
        pattern: Pattern,
        count: u32,
    },
    /// transition -> place; produces `count` copies of `expr`.
    Output {
        transition: String,
        place: String,
        expr: Expr,
        count: u32,
    },
}

impl Arc {
    pub fn place(&self) -> &str {
        match self {
            Arc::Input { place, .. } | Arc::Output { place, .. } => place,
        }
    }

    pub fn transition(&self) -> &str {
        match self {
            Arc::Input { transition, .. } | Arc::Output { transition, .. } => transition,
        }
    }

    pub fn count(&self) -> u32 {
        match self {
            Arc::Input { count, .. } | Arc::Output { count, .. } => *count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialToken {
    pub place: String,
    pub color: Value,
    pub time: Time,
}

/// A timed colored Petri net as written in a model file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetModel {
    pub name: String,
    pub places: Vec<PlaceDef>,
    pub transitions: Vec<TransitionDef>,
    pub arcs: Vec<Arc>,
    pub initial: Vec<InitialToken>,
}

/// One structural problem, naming the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    fn new(element: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            element: element.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

impl NetModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn place(&mut self, id: &str, colors: ColorSet) -> &mut Self {
        self.places.push(PlaceDef {
            id: id.to_string(),
            colors,
            capacity: None,
        });
        self
    }

    pub fn bounded_place(&mut self, id: &str, colors: ColorSet, capacity: u32) -> &mut Self {
        self.places.push(PlaceDef {
            id: id.to_string(),
            colors,
            capacity: Some(capacity),
        });
        self
    }

    pub fn transition(&mut self, id: &str, delay: Expr) -> &mut Self {
        self.transitions.push(TransitionDef {
            id: id.to_string(),
            guard: None,
            delay,
            priority: 0,
            emits: None,
        });
        self
    }

    pub fn transition_mut(&mut self, id: &str) -> Option<&mut TransitionDef> {
        self.transitions.iter_mut().find(|t| t.id == id)
    }

    pub fn input(&mut self, place: &str, transition: &str, pattern: Pattern) -> &mut Self {
        self.arcs.push(Arc::Input {
            place: place.to_string(),
            transition: transition.to_string(),
            pattern,
            count: 1,
        });
        self
    }

    pub fn output(&mut self, transition: &str, place: &str, expr: Expr) -> &mut Self {
        self.arcs.push(Arc::Output {
            transition: transition.to_string(),
            place: place.to_string(),
            expr,
            count: 1,
        });
        self
    }

    pub fn token(&mut self, place: &str, color: Value, time: Time) -> &mut Self {
        self.initial.push(InitialToken {
            place: place.to_string(),
            color,
            time,
        });
        self
    }
}

/// Checks every structural invariant of `net`; an empty result means the net
/// can be compiled.
pub fn validate(net: &NetModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut places: HashMap<&str, &PlaceDef> = HashMap::new();
    for p in &net.places {
        if places.insert(p.id.as_str(), p).is_some() {
            out.push(Diagnostic::new(format!("place `{}`", p.id), "duplicate place id"));
        }
    }
    let mut transitions: HashMap<&str, &TransitionDef> = HashMap::new();
    for t in &net.transitions {
        if places.contains_key(t.id.as_str()) {
            out.push(Diagnostic::new(
                format!("transition `{}`", t.id),
                "id already used by a place",
            ));
        }
        if transitions.insert(t.id.as_str(), t).is_some() {
            out.push(Diagnostic::new(
                format!("transition `{}`", t.id),
                "duplicate transition id",
            ));
        }
    }

    for (i, arc) in net.arcs.iter().enumerate() {
        let label = format!("arc #{i} ({} / {})", arc.place(), arc.transition());
        if !places.contains_key(arc.place()) {
            out.push(Diagnostic::new(
                label.clone(),
                format!("references missing place `{}`", arc.place()),
            ));
        }
        if !transitions.contains_key(arc.transition()) {
            out.push(Diagnostic::new(
                label.clone(),
                format!("references missing transition `{}`", arc.transition()),
            ));
        }
        if arc.count() == 0 {
            out.push(Diagnostic::new(label, "arc multiplicity must be at least 1"));
        }
    }

    for t in &net.transitions {
        let label = format!("transition `{}`", t.id);
        let inputs: Vec<&Pattern> = net
            .arcs
            .iter()
            .filter_map(|a| match a {
                Arc::Input {
                    transition,
                    pattern,
                    ..
                } if *transition == t.id => Some(pattern),
                _ => None,
            })
            .collect();
        if inputs.is_empty() {
            out.push(Diagnostic::new(label.clone(), "no input arcs"));
        }
        let mut bound = BTreeSet::new();
        inputs.iter().for_each(|p| p.vars(&mut bound));

        let mut exprs: Vec<(&str, &Expr)> = vec![("delay", &t.delay)];
        if let Some(g) = &t.guard {
            exprs.push(("guard", g));
        }
        for a in &net.arcs {
            if let Arc::Output {
                transition, expr, ..
            } = a
            {
                if *transition == t.id {
                    exprs.push(("output arc", expr));
                }
            }
        }
        for (what, e) in exprs {
            for problem in e.check() {
                out.push(Diagnostic::new(label.clone(), format!("{what}: {problem}")));
            }
            let mut free = BTreeSet::new();
            e.free_vars(&mut free);
            for v in free.difference(&bound) {
                out.push(Diagnostic::new(
                    label.clone(),
                    format!("{what} uses variable `{v}` not bound by any input arc"),
                ));
            }
            if what != "output arc" && e.is_stochastic() {
                out.push(Diagnostic::new(
                    label.clone(),
                    format!("{what} must be deterministic"),
                ));
            }
        }
        if let Some(kind) = t.emits {
            if !matches!(kind, EventKind::Failure | EventKind::Repair) {
                out.push(Diagnostic::new(
                    label.clone(),
                    format!("may only emit failure or repair events, not {kind}"),
                ));
            }
        }
    }

    let mut initial_counts: HashMap<&str, u32> = HashMap::new();
    for tok in &net.initial {
        let label = format!("initial token in `{}`", tok.place);
        match places.get(tok.place.as_str()) {
            None => out.push(Diagnostic::new(
                label,
                format!("references missing place `{}`", tok.place),
            )),
            Some(p) => {
                if !p.colors.contains(&tok.color) {
                    out.push(Diagnostic::new(
                        label.clone(),
                        format!("color {} is not in color set {}", tok.color, p.colors),
                    ));
                }
                let n = initial_counts.entry(p.id.as_str()).or_default();
                *n += 1;
                if p.capacity.is_some_and(|cap| *n > cap) {
                    out.push(Diagnostic::new(label, "initial marking exceeds place capacity"));
                }
            }
        }
    }
    out
}
