//! Parameterized deadlock detection for disjunctive systems.
//!
//! Works on the coverability order refined with zero-pattern equality: under
//! the assumption that no user transition is guarded by its own source state,
//! local enabledness depends only on the controller state and the zero
//! pattern of the counters, so the set of deadlocked configurations is a
//! finite union of such cones. Backward exploration uses a dedicated
//! predecessor operator that preserves enough precision on this order and is
//! exact after at most `2^|Q_B|` applications.
//!
//! Rendezvous systems are handled through a disjunctive overapproximation
//! ([`pr_overapprox`]); broadcast systems are not supported.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::core::{
    min_basis, Config, Delta, DisjTransition, OrderKind, Owner, StateRef, SyncDir, System,
    SystemKind, UpSet,
};
use crate::semantics::{initial_witness, successors};
use crate::PrepairError;

/// Reject systems outside the supported fragment: deadlock analysis is
/// defined for disjunctive systems whose user template has no transition
/// guarded by its own source state.
pub fn validate_for_deadlock(sys: &System) -> Result<(), PrepairError> {
    let Delta::Disj(ts) = &sys.delta else {
        return Err(PrepairError::Unsupported(format!(
            "deadlock detection on {} systems requires the disjunctive overapproximation",
            sys.kind
        )));
    };
    for t in ts {
        if t.owner == Owner::B && t.guard == StateRef::b(t.from) {
            return Err(PrepairError::Unsupported(format!(
                "transition '{}' is guarded by its own source state '{}'; \
                 deadlock detection requires self-guard-free user templates",
                t.id,
                sys.b_states[t.from]
            )));
        }
    }
    Ok(())
}

/// Strip product components: deadlock analysis concerns the underlying
/// system, not the safety monitor.
fn underlying(sys: &System) -> System {
    let mut s = sys.clone();
    s.automaton = None;
    s
}

/// Minimal deadlocked configurations (zero-pattern order): one candidate per
/// controller state and non-empty zero pattern, kept iff no step is enabled.
/// Enabledness is invariant within each cone, so the candidate decides the
/// whole cone.
pub fn deadlock_basis(sys: &System) -> Result<UpSet, PrepairError> {
    let sys = underlying(sys);
    validate_for_deadlock(&sys)?;
    let nb = sys.b_states.len();
    let mut basis = UpSet::new(OrderKind::CoverZero);
    for a in 0..sys.a_states.len() {
        for pattern in 1u64..(1 << nb) {
            let counts: Vec<u64> = (0..nb).map(|q| u64::from(pattern & (1 << q) != 0)).collect();
            let cfg = Config::new_counts(a, counts);
            if successors(&sys, &cfg)?.is_empty() {
                basis.insert(cfg);
            }
        }
    }
    Ok(basis)
}

/// Dedicated predecessor operator on the zero-pattern order: controller
/// moves keep the counters; user moves either undo a single step, keep the
/// mover's source occupied when it was the last process at the target, or
/// undo all processes at the target at once.
pub fn db_pred(sys: &System, basis: &UpSet) -> Result<UpSet, PrepairError> {
    let sys = underlying(sys);
    let Delta::Disj(ts) = &sys.delta else { unreachable!("validated disjunctive") };
    let mut out: Vec<Config> = Vec::new();
    for elem in basis.iter() {
        let a_target = elem.a_state.expect("disjunctive configuration has a controller");
        for t in ts {
            match t.owner {
                Owner::A => {
                    if t.to != a_target {
                        continue;
                    }
                    // controller cannot witness for itself
                    let Owner::B = t.guard.owner else { continue };
                    if elem.counts[t.guard.idx] >= 1 {
                        out.push(Config::new_counts(t.from, elem.counts.clone()));
                    }
                }
                Owner::B => {
                    let (i, j) = (t.from, t.to);
                    let mut candidates: Vec<Vec<u64>> = Vec::new();
                    // undo one step
                    if elem.counts[j] >= 1 {
                        let mut c = elem.counts.clone();
                        c[i] = c[i].checked_add(1).ok_or(PrepairError::CounterOverflow)?;
                        c[j] -= 1;
                        candidates.push(c);
                    }
                    // the mover may have been one of several, leaving the
                    // target still occupied afterwards
                    if elem.counts[j] == 1 && i != j {
                        let mut c = elem.counts.clone();
                        c[i] = c[i].checked_add(1).ok_or(PrepairError::CounterOverflow)?;
                        candidates.push(c);
                    }
                    // undo every process at the target at once
                    let k = elem.counts[j];
                    if k >= 1 && i != j {
                        let mut c = elem.counts.clone();
                        c[i] = c[i].checked_add(k).ok_or(PrepairError::CounterOverflow)?;
                        c[j] = 0;
                        candidates.push(c);
                    }
                    for c in candidates {
                        // mover present and guard satisfied at the source
                        if c[i] < 1 {
                            continue;
                        }
                        let guard_ok = match t.guard.owner {
                            Owner::A => a_target == t.guard.idx,
                            Owner::B => {
                                let need = 1 + u64::from(t.guard.idx == i);
                                c[t.guard.idx] >= need
                            }
                        };
                        if guard_ok {
                            out.push(Config::new_counts(a_target, c));
                        }
                    }
                }
            }
        }
    }
    Ok(min_basis(OrderKind::CoverZero, out))
}

/// A concrete deadlock witness: an initial configuration, the transitions
/// fired along a path, and the deadlocked configuration reached.
#[derive(Debug, Clone)]
pub struct DeadlockWitness {
    pub initial: Config,
    /// Atoms (transition indices of the analyzed system) fired on the path.
    pub path_atoms: BTreeSet<usize>,
    pub deadlocked: Config,
}

/// Outcome of deadlock detection.
#[derive(Debug, Clone)]
pub enum DeadlockOutcome {
    /// No instance can deadlock. `capped` records whether the iteration
    /// bound (rather than a fixpoint) ended the search; the bound is chosen
    /// so the result is exact either way.
    NoDeadlock { iterations: usize, capped: bool },
    Deadlock { witnesses: Vec<DeadlockWitness>, iterations: usize },
}

/// Backward reachability from the deadlock basis under the zero-pattern
/// order, stopping at a fixpoint, at a covered initial configuration, or
/// after `2^|Q_B|` predecessor applications (after which the computed set is
/// exact).
pub fn detect_deadlock(sys: &System) -> Result<DeadlockOutcome, PrepairError> {
    let base = underlying(sys);
    let d0 = deadlock_basis(&base)?;
    if d0.is_empty() {
        return Ok(DeadlockOutcome::NoDeadlock { iterations: 0, capped: false });
    }
    let cap = 1usize
        .checked_shl(base.b_states.len() as u32)
        .unwrap_or(usize::MAX);
    let mut layers: Vec<UpSet> = vec![d0.clone()];
    let mut temporary = d0;
    let mut visited = UpSet::new(OrderKind::CoverZero);
    let mut iterations = 0usize;
    loop {
        if let Some(w) = layers
            .last()
            .expect("nonempty layers")
            .iter()
            .find_map(|e| initial_witness(&base, e))
        {
            let witnesses = extract_witnesses(&base, &layers, &w)?;
            return Ok(DeadlockOutcome::Deadlock { witnesses, iterations });
        }
        if temporary.same_set(&visited) {
            return Ok(DeadlockOutcome::NoDeadlock { iterations, capped: false });
        }
        if iterations >= cap {
            return Ok(DeadlockOutcome::NoDeadlock { iterations, capped: true });
        }
        visited = temporary.clone();
        let next = db_pred(&base, layers.last().expect("nonempty layers"))?;
        iterations += 1;
        temporary = visited.union(&next);
        layers.push(next);
    }
}

/// Walk forward from the initial witness through the backward layers. A
/// single backward application may collapse several concrete steps, so each
/// hop is a breadth-first search for the nearest configuration covered by
/// the next layer (instances are finite, so the search terminates).
fn extract_witnesses(
    sys: &System,
    layers: &[UpSet],
    initial: &Config,
) -> Result<Vec<DeadlockWitness>, PrepairError> {
    let mut current = initial.clone();
    let mut atoms: BTreeSet<usize> = BTreeSet::new();
    for layer in layers.iter().rev().skip(1) {
        let (cfg, used) = bfs_to_cover(sys, &current, layer)?;
        atoms.extend(used);
        current = cfg;
    }
    // `current` is covered by the deadlock basis cone and hence deadlocked.
    debug_assert!(successors(sys, &current)?.is_empty());
    Ok(vec![DeadlockWitness {
        initial: initial.clone(),
        path_atoms: atoms,
        deadlocked: current,
    }])
}

fn bfs_to_cover(
    sys: &System,
    start: &Config,
    target: &UpSet,
) -> Result<(Config, BTreeSet<usize>), PrepairError> {
    if target.covers(start) {
        return Ok((start.clone(), BTreeSet::new()));
    }
    let mut queue: VecDeque<Config> = VecDeque::from([start.clone()]);
    let mut parents: BTreeMap<Config, (Config, usize)> = BTreeMap::new();
    while let Some(cfg) = queue.pop_front() {
        for step in successors(sys, &cfg)? {
            if parents.contains_key(&step.target) || step.target == *start {
                continue;
            }
            let atom = step.fired[0];
            parents.insert(step.target.clone(), (cfg.clone(), atom));
            if target.covers(&step.target) {
                let mut atoms = BTreeSet::new();
                let mut cur = step.target.clone();
                while cur != *start {
                    let (p, a) = parents[&cur].clone();
                    atoms.insert(a);
                    cur = p;
                }
                return Ok((step.target, atoms));
            }
            queue.push_back(step.target);
        }
    }
    Err(PrepairError::InvalidInput(
        "internal: forward extraction of a deadlock witness failed".into(),
    ))
}

/// Disjunctive overapproximation of a rendezvous system: internal steps
/// become trivially guarded transitions (guarded by the other template's
/// states, so they are always enabled in non-degenerate instances); each
/// send/receive pair becomes two transitions, each guarded by the other
/// participant's source state. Returns the overapproximation and a map from
/// its transitions back to the original transition atoms.
pub fn pr_overapprox(sys: &System) -> Result<(System, Vec<usize>), PrepairError> {
    if sys.kind != SystemKind::Rendezvous {
        return Err(PrepairError::Unsupported(format!(
            "the disjunctive overapproximation is defined for rendezvous systems, not {}",
            sys.kind
        )));
    }
    let Delta::Sync(ts) = &sys.delta else {
        return Err(PrepairError::InvalidInput(
            "rendezvous system with disjunctive transitions".into(),
        ));
    };
    let mut delta: Vec<DisjTransition> = Vec::new();
    let mut atom_map: Vec<usize> = Vec::new();
    let mut push = |t: DisjTransition, origin_atom: usize, map: &mut Vec<usize>| {
        map.push(origin_atom);
        delta.push(t);
    };
    for (si, s) in ts.iter().enumerate() {
        match s.dir {
            SyncDir::Tau => {
                let guards: Vec<StateRef> = match s.owner {
                    Owner::A => (0..sys.b_states.len()).map(StateRef::b).collect(),
                    Owner::B => (0..sys.a_states.len()).map(StateRef::a).collect(),
                };
                for (gi, g) in guards.into_iter().enumerate() {
                    push(
                        DisjTransition {
                            id: format!("{}@ov{}", s.id, gi),
                            origin: s.id.clone(),
                            owner: s.owner,
                            from: s.from,
                            guard: g,
                            to: s.to,
                        },
                        si,
                        &mut atom_map,
                    );
                }
            }
            SyncDir::Send => {
                for (ri, r) in ts.iter().enumerate() {
                    if r.dir != SyncDir::Recv || r.action != s.action {
                        continue;
                    }
                    if s.owner == r.owner && s.owner == Owner::A {
                        continue; // a single controller cannot rendezvous with itself
                    }
                    let sref = |t: &crate::core::SyncTransition, idx: usize| match t.owner {
                        Owner::A => StateRef::a(idx),
                        Owner::B => StateRef::b(idx),
                    };
                    push(
                        DisjTransition {
                            id: format!("{}@ov_{}", s.id, r.id),
                            origin: s.id.clone(),
                            owner: s.owner,
                            from: s.from,
                            guard: sref(r, r.from),
                            to: s.to,
                        },
                        si,
                        &mut atom_map,
                    );
                    push(
                        DisjTransition {
                            id: format!("{}@ov_{}", r.id, s.id),
                            origin: r.id.clone(),
                            owner: r.owner,
                            from: r.from,
                            guard: sref(s, s.from),
                            to: r.to,
                        },
                        ri,
                        &mut atom_map,
                    );
                }
            }
            _ => {}
        }
    }
    let over = System {
        kind: SystemKind::Disjunctive,
        name: format!("{} (disjunctive overapproximation)", sys.name),
        a_states: sys.a_states.clone(),
        a_init: sys.a_init,
        b_states: sys.b_states.clone(),
        b_init: sys.b_init,
        delta: Delta::Disj(delta),
        automaton: None,
    };
    Ok((over, atom_map))
}

/// Does a concrete instance reached from `initial` contain a deadlock?
/// (Explicit-state, used by tests and the oracle.)
pub fn explicit_deadlock(sys: &System, initial: &Config) -> Result<Option<Config>, PrepairError> {
    let mut seen: BTreeSet<Config> = BTreeSet::from([initial.clone()]);
    let mut queue: VecDeque<Config> = VecDeque::from([initial.clone()]);
    while let Some(cfg) = queue.pop_front() {
        let succs = successors(sys, &cfg)?;
        if succs.is_empty() {
            return Ok(Some(cfg));
        }
        for s in succs {
            if seen.insert(s.target.clone()) {
                queue.push_back(s.target);
            }
        }
    }
    Ok(None)
}
