//! Compiled nets and timed markings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::expr::{Expr, Pattern};
use super::model::{validate, Arc, NetModel, PlaceDef, TransitionDef};
use super::value::Value;
use super::{KernelError, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PlaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub usize);

#[derive(Debug, Clone)]
pub(crate) struct InputArc {
    pub place: usize,
    pub pattern: Pattern,
    pub count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct OutputArc {
    pub place: usize,
    pub expr: Expr,
    pub count: u32,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledTransition {
    pub def: TransitionDef,
    pub inputs: Vec<InputArc>,
    pub outputs: Vec<OutputArc>,
}

/// A validated net with names resolved to indices.
#[derive(Debug, Clone)]
pub struct Net {
    model: NetModel,
    places: Vec<PlaceDef>,
    place_index: HashMap<String, usize>,
    pub(crate) transitions: Vec<CompiledTransition>,
    transition_index: HashMap<String, usize>,
}

impl Net {
    pub fn new(model: NetModel) -> Result<Net, KernelError> {
        let diags = validate(&model);
        if !diags.is_empty() {
            return Err(KernelError::Malformed(diags));
        }
        let places = model.places.clone();
        let place_index: HashMap<String, usize> = places
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        let transition_index: HashMap<String, usize> = model
            .transitions
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        let mut transitions: Vec<CompiledTransition> = model
            .transitions
            .iter()
            .map(|def| CompiledTransition {
                def: def.clone(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            })
            .collect();
        for arc in &model.arcs {
            let t = &mut transitions[transition_index[arc.transition()]];
            let place = place_index[arc.place()];
            match arc {
                Arc::Input { pattern, count, .. } => t.inputs.push(InputArc {
                    place,
                    pattern: pattern.clone(),
                    count: *count,
                }),
                Arc::Output { expr, count, .. } => t.outputs.push(OutputArc {
                    place,
                    expr: expr.clone(),
                    count: *count,
                }),
            }
        }
        Ok(Net {
            model,
            places,
            place_index,
            transitions,
            transition_index,
        })
    }

    pub fn model(&self) -> &NetModel {
        &self.model
    }

    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn place_count(&self) -> usize {
        self.places.len()
    }

    pub fn place_id(&self, name: &str) -> Option<PlaceId> {
        self.place_index.get(name).copied().map(PlaceId)
    }

    pub fn place(&self, id: PlaceId) -> &PlaceDef {
        &self.places[id.0]
    }

    pub fn transition_id(&self, name: &str) -> Option<TransitionId> {
        self.transition_index.get(name).copied().map(TransitionId)
    }

    pub fn transition(&self, id: TransitionId) -> &TransitionDef {
        &self.transitions[id.0].def
    }

    pub fn transition_ids(&self) -> impl Iterator<Item = TransitionId> {
        (0..self.transitions.len()).map(TransitionId)
    }

    pub fn empty_marking(&self) -> Marking {
        Marking {
            places: vec![BTreeMap::new(); self.places.len()],
            counts: vec![0; self.places.len()],
            clock: 0,
        }
    }

    /// The marking declared in the model file, clock 0.
    pub fn initial_marking(&self) -> Marking {
        let mut m = self.empty_marking();
        for tok in &self.model.initial {
            // validate() already checked colors and capacities.
            let p = self.place_index[&tok.place];
            m.insert(p, tok.color.clone(), tok.time);
        }
        m
    }

    pub(crate) fn check_color(&self, place: usize, color: &Value) -> Result<(), KernelError> {
        let def = &self.places[place];
        if def.colors.contains(color) {
            Ok(())
        } else {
            Err(KernelError::ColorMismatch {
                place: def.id.clone(),
                color: color.to_string(),
            })
        }
    }
}

/// Token state of a net: a timestamped multiset per place plus the clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marking {
    // color -> availability times, ascending
    places: Vec<BTreeMap<Value, Vec<Time>>>,
    counts: Vec<u32>,
    pub(crate) clock: Time,
}

impl Marking {
    pub fn clock(&self) -> Time {
        self.clock
    }

    pub fn count(&self, place: PlaceId) -> u32 {
        self.counts[place.0]
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Tokens of `place` as `(color, availability time)`, in canonical order.
    pub fn tokens(&self, place: PlaceId) -> impl Iterator<Item = (&Value, Time)> {
        self.places[place.0]
            .iter()
            .flat_map(|(v, times)| times.iter().map(move |t| (v, *t)))
    }

    /// Adds a token after checking the place's color set and capacity.
    pub fn add(&mut self, net: &Net, place: PlaceId, color: Value, time: Time) -> Result<(), KernelError> {
        net.check_color(place.0, &color)?;
        let def = net.place(place);
        if def.capacity.is_some_and(|cap| self.counts[place.0] >= cap) {
            return Err(KernelError::CapacityExceeded {
                place: def.id.clone(),
            });
        }
        self.insert(place.0, color, time);
        Ok(())
    }

    pub(crate) fn insert(&mut self, place: usize, color: Value, time: Time) {
        let times = self.places[place].entry(color).or_default();
        let at = times.partition_point(|&t| t <= time);
        times.insert(at, time);
        self.counts[place] += 1;
    }

    pub(crate) fn available(&self, place: usize, color: &Value) -> u32 {
        self.places[place].get(color).map_or(0, |t| t.len() as u32)
    }

    /// Availability time of the `n`-th earliest token of `color` (1-based).
    pub(crate) fn nth_time(&self, place: usize, color: &Value, n: u32) -> Option<Time> {
        if n == 0 {
            return Some(0);
        }
        self.places[place].get(color)?.get(n as usize - 1).copied()
    }

    pub(crate) fn remove_earliest(&mut self, place: usize, color: &Value, n: u32) -> Vec<Time> {
        let times = self.places[place]
            .get_mut(color)
            .expect("caller checked availability");
        let taken: Vec<Time> = times.drain(..n as usize).collect();
        if times.is_empty() {
            self.places[place].remove(color);
        }
        self.counts[place] -= n;
        taken
    }

    pub(crate) fn distinct(&self, place: usize) -> impl Iterator<Item = (&Value, u32)> {
        self.places[place].iter().map(|(v, t)| (v, t.len() as u32))
    }

    /// Projection that forgets timestamps and the clock.
    pub fn untimed(&self) -> UntimedMarking {
        UntimedMarking(
            self.places
                .iter()
                .map(|m| m.iter().map(|(v, t)| (v.clone(), t.len() as u32)).collect())
                .collect(),
        )
    }
}

/// A marking without time: color counts per place (indexed by [`PlaceId`]).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UntimedMarking(pub Vec<BTreeMap<Value, u32>>);

impl UntimedMarking {
    pub fn count(&self, place: PlaceId) -> u32 {
        self.0[place.0].values().sum()
    }

    pub(crate) fn add(&mut self, place: usize, color: Value, n: u32) {
        *self.0[place].entry(color).or_default() += n;
    }

    pub(crate) fn remove(&mut self, place: usize, color: &Value, n: u32) {
        let slot = self.0[place].get_mut(color).expect("caller checked availability");
        *slot -= n;
        if *slot == 0 {
            self.0[place].remove(color);
        }
    }
}

impl fmt::Display for UntimedMarking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, place) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            for (j, (v, n)) in place.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{n}`{v}")?;
            }
        }
        f.write_str("]")
    }
}

/// Read access shared by timed and untimed markings for binding search.
pub(crate) trait TokenStore {
    fn available(&self, place: usize, color: &Value) -> u32;
    fn for_each_color(&self, place: usize, f: &mut dyn FnMut(&Value, u32));
    fn distinct_count(&self, place: usize) -> usize;
    fn total(&self, place: usize) -> u32;
}

impl TokenStore for Marking {
    fn available(&self, place: usize, color: &Value) -> u32 {
        Marking::available(self, place, color)
    }

    fn for_each_color(&self, place: usize, f: &mut dyn FnMut(&Value, u32)) {
        for (v, n) in self.distinct(place) {
            f(v, n);
        }
    }

    fn distinct_count(&self, place: usize) -> usize {
        self.places[place].len()
    }

    fn total(&self, place: usize) -> u32 {
        self.counts[place]
    }
}

impl TokenStore for UntimedMarking {
    fn available(&self, place: usize, color: &Value) -> u32 {
        self.0[place].get(color).copied().unwrap_or(0)
    }

    fn for_each_color(&self, place: usize, f: &mut dyn FnMut(&Value, u32)) {
        for (v, n) in &self.0[place] {
            f(v, *n);
        }
    }

    fn distinct_count(&self, place: usize) -> usize {
        self.0[place].len()
    }

    fn total(&self, place: usize) -> u32 {
        self.0[place].values().sum()
    }
}
