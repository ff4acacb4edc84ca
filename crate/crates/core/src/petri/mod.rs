//! Deterministic timed colored Petri-net kernel.
//!
//! Tokens carry a color ([`Value`]) and the simulated time at which they become
//! available. A transition fires at the latest availability time of the tokens
//! it consumes; its delay is applied to every token it produces. Conflicts are
//! resolved by the total order (enabling time, priority, binding, declaration
//! order), so a run is a pure function of net, marking, seed and external
//! injections.

mod engine;
mod expr;
mod model;
mod net;
mod reach;
mod rng;
mod syntax;
mod trace;

pub use engine::{
    advance, enabled_bindings, fire, fire_in_place, first_enabled, run, Advance, Binding,
    EnabledBinding, Hooks, Injection, NoHooks, Simulator, Step,
};
pub use expr::{Env, EvalError, Expr, Op, Pattern};
pub use model::{validate, Arc, Diagnostic, InitialToken, NetModel, PlaceDef, TransitionDef};
pub use net::{Marking, Net, PlaceId, TransitionId, UntimedMarking};
pub use reach::{reachable_markings, successors};
pub use rng::SimRng;
pub use syntax::SyntaxError;
pub use trace::{EventKind, EventTrace, RunOutcome, SimEvent, TraceError};
pub use value::{ColorSet, Value};

mod value;

/// Simulated time in integer milliseconds.
pub type Time = u64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KernelError {
    #[error("malformed net: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Malformed(Vec<Diagnostic>),
    #[error("unknown place `{0}`")]
    UnknownPlace(String),
    #[error("unknown transition `{0}`")]
    UnknownTransition(String),
    #[error("color {color} does not belong to the color set of `{place}`")]
    ColorMismatch { place: String, color: String },
    #[error("place `{place}` is at capacity")]
    CapacityExceeded { place: String },
    #[error("transition `{transition}` is not enabled: {reason}")]
    NotEnabled { transition: String, reason: String },
    #[error("transition `{transition}`: {message}")]
    Eval { transition: String, message: String },
    #[error("more than {bound} reachable markings")]
    BoundExceeded { bound: usize },
    #[error("horizon must be positive")]
    InvalidHorizon,
    #[error("simulated time overflow")]
    TimeOverflow,
}
