//! Core data model: templates, transitions, configurations, well-quasi-orders
//! and upward-closed sets represented by their minimal bases (antichains).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::PrepairError;

/// Which template a state or transition belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Owner {
    /// The controller template (single instance).
    A,
    /// The user template (replicated `n` times).
    B,
}

/// A reference to a template state: owner plus index into that template's
/// state list. State names live in [`System`]; this is a cheap `Copy` handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateRef {
    pub owner: Owner,
    pub idx: usize,
}

impl StateRef {
    pub fn a(idx: usize) -> Self {
        StateRef { owner: Owner::A, idx }
    }
    pub fn b(idx: usize) -> Self {
        StateRef { owner: Owner::B, idx }
    }
}

/// The three system classes handled by the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    /// Guarded transitions; a transition fires if some *other* process
    /// occupies a guard state.
    Disjunctive,
    /// Pairwise rendezvous (`a!` / `a?`).
    Rendezvous,
    /// Broadcast (`a!!` / `a??`), no controller template.
    Broadcast,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemKind::Disjunctive => write!(f, "disjunctive"),
            SystemKind::Rendezvous => write!(f, "rendezvous"),
            SystemKind::Broadcast => write!(f, "broadcast"),
        }
    }
}

/// A disjunctively guarded transition in *split* (singleton guard) form.
///
/// Transitions with a larger guard set are split into one copy per guard
/// state at parse time; `origin` records the original transition id so that
/// repairs can be reported against the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisjTransition {
    /// Id of this (split) transition; unique within the system.
    pub id: String,
    /// Id of the original (possibly unsplit) transition.
    pub origin: String,
    /// Template the moving process belongs to.
    pub owner: Owner,
    pub from: usize,
    /// Singleton guard: some other process must occupy this state.
    pub guard: StateRef,
    pub to: usize,
}

/// Direction of a synchronizing transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SyncDir {
    /// Internal step, no synchronization.
    Tau,
    /// Rendezvous send `a!`.
    Send,
    /// Rendezvous receive `a?`.
    Recv,
    /// Broadcast send `a!!`.
    BSend,
    /// Broadcast receive `a??`.
    BRecv,
}

impl fmt::Display for SyncDir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyncDir::Tau => write!(f, "tau"),
            SyncDir::Send => write!(f, "!"),
            SyncDir::Recv => write!(f, "?"),
            SyncDir::BSend => write!(f, "!!"),
            SyncDir::BRecv => write!(f, "??"),
        }
    }
}

/// A transition of a rendezvous or broadcast template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncTransition {
    pub id: String,
    pub owner: Owner,
    pub from: usize,
    /// Action label; empty for `tau`.
    pub action: String,
    pub dir: SyncDir,
    pub to: usize,
}

/// Transition relation, per system class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Delta {
    Disj(Vec<DisjTransition>),
    Sync(Vec<SyncTransition>),
}

impl Delta {
    pub fn len(&self) -> usize {
        match self {
            Delta::Disj(v) => v.len(),
            Delta::Sync(v) => v.len(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Ids of all transitions, in declaration order.
    pub fn ids(&self) -> Vec<&str> {
        match self {
            Delta::Disj(v) => v.iter().map(|t| t.id.as_str()).collect(),
            Delta::Sync(v) => v.iter().map(|t| t.id.as_str()).collect(),
        }
    }
}

/// Observation formula read by the safety automaton: a boolean combination of
/// state-equality atoms over the discrete part of a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsFormula {
    True,
    /// Controller is in the given A-state.
    AState(usize),
    /// Explicit process `proc` (0-based) is in the given B-state.
    Explicit { proc: usize, state: usize },
    Not(Box<ObsFormula>),
    And(Box<ObsFormula>, Box<ObsFormula>),
}

impl ObsFormula {
    /// Evaluate over the discrete part of a configuration.
    pub fn eval(&self, a_state: usize, explicit: &[usize]) -> bool {
        match self {
            ObsFormula::True => true,
            ObsFormula::AState(q) => a_state == *q,
            ObsFormula::Explicit { proc, state } => explicit.get(*proc) == Some(state),
            ObsFormula::Not(f) => !f.eval(a_state, explicit),
            ObsFormula::And(l, r) => l.eval(a_state, explicit) && r.eval(a_state, explicit),
        }
    }
}

/// An automaton transition on observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutTransition {
    pub from: usize,
    pub obs: ObsFormula,
    /// Source text of the observation, kept for reporting.
    pub obs_text: String,
    pub to: usize,
}

/// A (nondeterministic, partial) safety automaton over observations of the
/// discrete part of configurations. A run reaching an accepting state
/// witnesses a violation. Missing transitions go to an implicit
/// non-accepting sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Automaton {
    pub states: Vec<String>,
    pub init: usize,
    pub accepting: BTreeSet<usize>,
    pub transitions: Vec<AutTransition>,
    /// Number of B-processes tracked explicitly in product configurations.
    pub explicit_k: usize,
}

impl Automaton {
    /// Successor automaton states on reading `obs(a_state, explicit)`.
    pub fn step(&self, from: usize, a_state: usize, explicit: &[usize]) -> Vec<usize> {
        self.transitions
            .iter()
            .filter(|t| t.from == from && t.obs.eval(a_state, explicit))
            .map(|t| t.to)
            .collect()
    }
}

/// A parameterized system: one controller template A (absent for broadcast),
/// one user template B replicated arbitrarily, and a transition relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct System {
    pub kind: SystemKind,
    /// Human-readable name, used in reports.
    pub name: String,
    /// Controller states; empty iff `kind == Broadcast`.
    pub a_states: Vec<String>,
    pub a_init: usize,
    pub b_states: Vec<String>,
    pub b_init: usize,
    pub delta: Delta,
    /// Optional safety automaton (disjunctive systems only).
    pub automaton: Option<Automaton>,
}

impl System {
    pub fn has_controller(&self) -> bool {
        self.kind != SystemKind::Broadcast
    }

    pub fn state_name(&self, s: StateRef) -> &str {
        match s.owner {
            Owner::A => &self.a_states[s.idx],
            Owner::B => &self.b_states[s.idx],
        }
    }

    pub fn explicit_k(&self) -> usize {
        self.automaton.as_ref().map_or(0, |a| a.explicit_k)
    }

    /// Resolve a state name to a reference; names are unique across both
    /// templates (validated at parse time).
    pub fn resolve_state(&self, name: &str) -> Option<StateRef> {
        if let Some(i) = self.a_states.iter().position(|s| s == name) {
            return Some(StateRef::a(i));
        }
        self.b_states.iter().position(|s| s == name).map(StateRef::b)
    }

    /// Human-readable rendering of a transition by id.
    pub fn describe_transition(&self, id: &str) -> Option<String> {
        match &self.delta {
            Delta::Disj(v) => v.iter().find(|t| t.id == id).map(|t| {
                let from = match t.owner {
                    Owner::A => &self.a_states[t.from],
                    Owner::B => &self.b_states[t.from],
                };
                let to = match t.owner {
                    Owner::A => &self.a_states[t.to],
                    Owner::B => &self.b_states[t.to],
                };
                format!("({from}, {{{}}}, {to})", self.state_name(t.guard))
            }),
            Delta::Sync(v) => v.iter().find(|t| t.id == id).map(|t| {
                let (states, _) = match t.owner {
                    Owner::A => (&self.a_states, "A"),
                    Owner::B => (&self.b_states, "B"),
                };
                if t.dir == SyncDir::Tau {
                    format!("({}, tau, {})", states[t.from], states[t.to])
                } else {
                    format!("({}, {}{}, {})", states[t.from], t.action, t.dir, states[t.to])
                }
            }),
        }
    }
}

/// A configuration of an instance of the system, counter representation:
/// controller state (if any), explicitly tracked B-processes (product
/// construction only), a count per B-state for the anonymous processes, and
/// the safety-automaton state (product construction only).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Config {
    pub a_state: Option<usize>,
    pub explicit: Vec<usize>,
    pub counts: Vec<u64>,
    pub aut: Option<usize>,
}

impl Config {
    pub fn new_counts(a_state: usize, counts: Vec<u64>) -> Self {
        Config { a_state: Some(a_state), explicit: Vec::new(), counts, aut: None }
    }

    pub fn broadcast(counts: Vec<u64>) -> Self {
        Config { a_state: None, explicit: Vec::new(), counts, aut: None }
    }

    /// Total number of counted B-processes.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Add `k` processes at B-state `i` (checked).
    pub fn add(&self, i: usize, k: u64) -> Result<Self, PrepairError> {
        let mut c = self.clone();
        c.counts[i] = c.counts[i]
            .checked_add(k)
            .ok_or(PrepairError::CounterOverflow)?;
        Ok(c)
    }

    /// Remove `k` processes at B-state `i`; `None` if fewer are present.
    pub fn sub(&self, i: usize, k: u64) -> Option<Self> {
        let mut c = self.clone();
        c.counts[i] = c.counts[i].checked_sub(k)?;
        Some(c)
    }

    pub fn render(&self, sys: &System) -> String {
        let mut parts = Vec::new();
        if let Some(a) = self.a_state {
            parts.push(sys.a_states[a].clone());
        }
        for (p, s) in self.explicit.iter().enumerate() {
            parts.push(format!("{}_{}", sys.b_states[*s], p + 1));
        }
        let counts = self
            .counts
            .iter()
            .zip(&sys.b_states)
            .map(|(c, n)| format!("{n}:{c}"))
            .collect::<Vec<_>>()
            .join(",");
        parts.push(format!("({counts})"));
        if let Some(q) = self.aut {
            let aut = sys.automaton.as_ref().expect("aut state without automaton");
            parts.push(aut.states[q].clone());
        }
        format!("[{}]", parts.join(" "))
    }
}

/// The well-quasi-order used to compare configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    /// Equal discrete parts, pointwise `<=` on counts.
    Cover,
    /// [`OrderKind::Cover`] plus equal zero pattern on counts.
    CoverZero,
}

/// `x <= y` in the given order. Discrete parts (controller state, explicit
/// processes, automaton state) must be equal; counts compare pointwise.
pub fn leq(order: OrderKind, x: &Config, y: &Config) -> bool {
    if x.a_state != y.a_state || x.explicit != y.explicit || x.aut != y.aut {
        return false;
    }
    debug_assert_eq!(x.counts.len(), y.counts.len());
    match order {
        OrderKind::Cover => x.counts.iter().zip(&y.counts).all(|(a, b)| a <= b),
        OrderKind::CoverZero => x
            .counts
            .iter()
            .zip(&y.counts)
            .all(|(a, b)| a <= b && (*a == 0) == (*b == 0)),
    }
}

/// An upward-closed set represented by its minimal basis: an antichain under
/// the chosen order, kept in canonical (derived `Ord`) order for determinism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpSet {
    pub order: OrderKind,
    elems: BTreeSet<Config>,
}

impl UpSet {
    pub fn new(order: OrderKind) -> Self {
        UpSet { order, elems: BTreeSet::new() }
    }

    pub fn from_iter<I: IntoIterator<Item = Config>>(order: OrderKind, iter: I) -> Self {
        let mut s = UpSet::new(order);
        for c in iter {
            s.insert(c);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Config> {
        self.elems.iter()
    }

    pub fn into_elems(self) -> BTreeSet<Config> {
        self.elems
    }

    /// Is `c` in the upward closure?
    pub fn covers(&self, c: &Config) -> bool {
        self.elems.iter().any(|e| leq(self.order, e, c))
    }

    /// Insert `c`, maintaining minimality. Returns `true` if `c` became a
    /// basis element (i.e. was not already covered).
    pub fn insert(&mut self, c: Config) -> bool {
        if self.covers(&c) {
            return false;
        }
        let order = self.order;
        self.elems.retain(|e| !leq(order, &c, e));
        self.elems.insert(c);
        true
    }

    /// Union with another basis (same order), re-minimized.
    pub fn union(&self, other: &UpSet) -> UpSet {
        debug_assert_eq!(self.order, other.order);
        let mut s = self.clone();
        for c in other.iter() {
            s.insert(c.clone());
        }
        s
    }

    /// `self` and `other` denote the same upward-closed set. Since minimal
    /// bases are canonical, this is structural equality of the antichains.
    pub fn same_set(&self, other: &UpSet) -> bool {
        self.order == other.order && self.elems == other.elems
    }
}

/// Minimal basis of an arbitrary collection of configurations.
pub fn min_basis<I: IntoIterator<Item = Config>>(order: OrderKind, iter: I) -> UpSet {
    UpSet::from_iter(order, iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: usize, counts: &[u64]) -> Config {
        Config::new_counts(a, counts.to_vec())
    }

    #[test]
    fn cover_order_basics() {
        let x = cfg(0, &[1, 0]);
        let y = cfg(0, &[2, 1]);
        assert!(leq(OrderKind::Cover, &x, &y));
        assert!(!leq(OrderKind::Cover, &y, &x));
        // zero pattern differs
        assert!(!leq(OrderKind::CoverZero, &x, &y));
        assert!(leq(OrderKind::CoverZero, &cfg(0, &[1, 1]), &y));
        // different controller state: incomparable
        assert!(!leq(OrderKind::Cover, &cfg(1, &[0, 0]), &y));
    }

    #[test]
    fn upset_insert_minimizes() {
        let mut s = UpSet::new(OrderKind::Cover);
        assert!(s.insert(cfg(0, &[2, 2])));
        assert!(s.insert(cfg(0, &[1, 3])));
        assert_eq!(s.len(), 2);
        // subsumes both
        assert!(s.insert(cfg(0, &[1, 1])));
        assert_eq!(s.len(), 1);
        assert!(s.covers(&cfg(0, &[5, 1])));
        assert!(!s.covers(&cfg(1, &[5, 5])));
        // covered element is rejected
        assert!(!s.insert(cfg(0, &[1, 2])));
    }
}
