//! Backward coverability model checking on the counter abstraction, plus
//! extraction of concrete reachable error sequences and the maximal safe
//! instance size.

use std::collections::BTreeSet;

use crate::core::{min_basis, Config, UpSet};
use crate::semantics::{initial_witness, pred_basis, successors, Step};
use crate::{PrepairError, core::System};

/// Outcome of backward model checking.
#[derive(Debug, Clone)]
pub struct McOutcome {
    pub safe: bool,
    /// Reported error sets: `reported[0]` is the error basis; each later set
    /// contains only the minimal elements not subsumed by earlier sets. When
    /// unsafe, the last entry is `E_k ∩ S_0` (the covered initial
    /// configurations).
    pub reported: Vec<BTreeSet<Config>>,
    /// Full minimal bases `E_0 .. E_k` as computed (kept for successor
    /// filtering during counterexample extraction).
    pub full: Vec<UpSet>,
    /// Initial configurations covered by the final basis (empty iff safe).
    pub witnesses: Vec<Config>,
    /// Number of predecessor iterations performed.
    pub iterations: usize,
}

/// Backward reachability from the upward closure of `err`: iterate minimal
/// predecessor bases until either an initial configuration is covered
/// (unsafe) or the accumulated upward-closed set stabilizes (safe).
pub fn model_check(sys: &System, err: &UpSet) -> Result<McOutcome, PrepairError> {
    run(sys, err, true)
}

/// Like [`model_check`] but always runs to the full fixpoint, so that the
/// complete set of coverable-from-error configurations is known.
pub fn model_check_full(sys: &System, err: &UpSet) -> Result<McOutcome, PrepairError> {
    run(sys, err, false)
}

fn intersect_initial(sys: &System, basis: &UpSet) -> Vec<Config> {
    basis.iter().filter_map(|e| initial_witness(sys, e)).collect()
}

fn run(sys: &System, err: &UpSet, stop_at_initial: bool) -> Result<McOutcome, PrepairError> {
    let order = err.order;
    let e0 = err.clone();
    let mut reported: Vec<BTreeSet<Config>> = vec![e0.iter().cloned().collect()];
    let mut full = vec![e0.clone()];

    // Error basis may itself cover an initial configuration (k = 0).
    let w0 = intersect_initial(sys, &e0);
    if stop_at_initial && !w0.is_empty() {
        reported[0] = w0.iter().cloned().collect();
        return Ok(McOutcome { safe: false, reported, full, witnesses: w0, iterations: 0 });
    }

    let mut temporary = e0.clone();
    let mut visited = UpSet::new(order);
    let mut iterations = 0usize;
    let mut unsafe_witnesses: Vec<Config> = w0;

    while !temporary.same_set(&visited) {
        visited = temporary.clone();
        let prev = full.last().expect("nonempty sequence").clone();
        let mut layer = Vec::new();
        for elem in prev.iter() {
            layer.extend(pred_basis(sys, elem)?);
        }
        let ei = min_basis(order, layer);
        iterations += 1;
        let new_elems: BTreeSet<Config> = ei
            .iter()
            .filter(|c| !visited.covers(c))
            .cloned()
            .collect();
        let witnesses = intersect_initial(sys, &ei);
        full.push(ei.clone());
        if !witnesses.is_empty() && stop_at_initial {
            reported.push(witnesses.iter().cloned().collect());
            return Ok(McOutcome { safe: false, reported, full, witnesses, iterations });
        }
        if !new_elems.is_empty() {
            reported.push(new_elems);
        } else if !stop_at_initial && full.len() >= 2 {
            // keep `full` aligned with iterations even when nothing is new
        }
        unsafe_witnesses.extend(witnesses);
        temporary = visited.union(&ei);
    }

    let witnesses: Vec<Config> = {
        let mut seen = BTreeSet::new();
        unsafe_witnesses.retain(|w| seen.insert(w.clone()));
        unsafe_witnesses
    };
    Ok(McOutcome { safe: witnesses.is_empty(), reported, full, witnesses, iterations })
}

/// A concrete reachable error sequence: `sets[0]` are covered initial
/// configurations, `sets[k]` concrete error configurations; consecutive sets
/// are related by global steps.
#[derive(Debug, Clone)]
pub struct ErrorSequence {
    /// `sets[i]` is `RE_{k-i}` (so `sets[0]` is initial, `sets.last()` is the
    /// error end).
    pub sets: Vec<BTreeSet<Config>>,
}

/// Extract concrete reachable error sets from an unsafe model-checking
/// outcome: start from the covered initial configurations and filter forward
/// successors through the backward bases.
pub fn reachable_error_sequence(
    sys: &System,
    outcome: &McOutcome,
) -> Result<ErrorSequence, PrepairError> {
    assert!(!outcome.safe, "error sequence requested for a safe outcome");
    let k = outcome.full.len() - 1;
    let mut sets: Vec<BTreeSet<Config>> = Vec::with_capacity(k + 1);
    sets.push(outcome.witnesses.iter().cloned().collect());
    for i in (0..k).rev() {
        let prev = sets.last().expect("nonempty");
        let filter = &outcome.full[i];
        let mut next = BTreeSet::new();
        for cfg in prev {
            for Step { target, .. } in successors(sys, cfg)? {
                if filter.covers(&target) {
                    next.insert(target);
                }
            }
        }
        if next.is_empty() {
            return Err(PrepairError::InvalidInput(
                "internal: forward filtering of a backward counterexample became empty".into(),
            ));
        }
        sets.push(next);
    }
    Ok(ErrorSequence { sets })
}

/// Maximal safe instance size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxSafeSize {
    /// No instance can cover the error set.
    SafeForAll,
    /// The smallest erroneous instance has `min_error_size` B-processes;
    /// instances with fewer processes are safe.
    Bounded { min_error_size: u64 },
}

/// Compute the maximal safe instance size by running the backward analysis
/// to its full fixpoint and minimizing the size of covered initial
/// configurations.
pub fn max_safe_size(sys: &System, err: &UpSet) -> Result<MaxSafeSize, PrepairError> {
    let outcome = model_check_full(sys, err)?;
    let min = outcome
        .witnesses
        .iter()
        .map(|w| w.total() + w.explicit.len() as u64)
        .min();
    Ok(match min {
        None => MaxSafeSize::SafeForAll,
        Some(m) => MaxSafeSize::Bounded { min_error_size: m },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::OrderKind;
    use crate::core::{Delta, DisjTransition, Owner, StateRef, SystemKind};

    /// The classic reader-writer system: writer (controller) with states
    /// {nw, w}, readers with states {nr, r}; mutual exclusion between the
    /// writer and readers is violated.
    pub fn reader_writer() -> System {
        let t = |id: &str, owner, from, guard, to| DisjTransition {
            id: id.into(),
            origin: id.into(),
            owner,
            from,
            guard,
            to,
        };
        // A-states: nw=0, w=1. B-states: nr=0, r=1.
        // Trivial guards are pre-split over all states.
        let mut delta = Vec::new();
        // (nw, Q, w)
        for (i, g) in [StateRef::a(0), StateRef::a(1), StateRef::b(0), StateRef::b(1)]
            .iter()
            .enumerate()
        {
            delta.push(t(&format!("w_enter#{i}"), Owner::A, 0, *g, 1));
        }
        // (w, Q, nw)
        for (i, g) in [StateRef::a(0), StateRef::a(1), StateRef::b(0), StateRef::b(1)]
            .iter()
            .enumerate()
        {
            delta.push(t(&format!("w_exit#{i}"), Owner::A, 1, *g, 0));
        }
        // (w, {r}, w)
        delta.push(t("w_stay", Owner::A, 1, StateRef::b(1), 1));
        // (nr, {nw}, r)
        delta.push(t("r_enter", Owner::B, 0, StateRef::a(0), 1));
        // (r, Q, nr)
        for (i, g) in [StateRef::a(0), StateRef::a(1), StateRef::b(0), StateRef::b(1)]
            .iter()
            .enumerate()
        {
            delta.push(t(&format!("r_exit#{i}"), Owner::B, 1, *g, 0));
        }
        // (r, {nw}, r)
        delta.push(t("r_stay", Owner::B, 1, StateRef::a(0), 1));
        System {
            kind: SystemKind::Disjunctive,
            name: "reader-writer".into(),
            a_states: vec!["nw".into(), "w".into()],
            a_init: 0,
            b_states: vec!["nr".into(), "r".into()],
            b_init: 0,
            delta: Delta::Disj(delta),
            automaton: None,
        }
    }

    #[test]
    fn reader_writer_is_unsafe_with_expected_sequence() {
        let sys = reader_writer();
        // error: writer writing while some reader reads
        let err = min_basis(
            OrderKind::Cover,
            [Config::new_counts(1, vec![0, 1])],
        );
        let out = model_check(&sys, &err).unwrap();
        assert!(!out.safe);
        let cfg = |a: usize, c: &[u64]| Config::new_counts(a, c.to_vec());
        assert_eq!(out.reported.len(), 3);
        assert_eq!(out.reported[0], BTreeSet::from([cfg(1, &[0, 1])]));
        assert_eq!(out.reported[1], BTreeSet::from([cfg(0, &[0, 1])]));
        assert_eq!(out.reported[2], BTreeSet::from([cfg(0, &[1, 0])]));
    }

    #[test]
    fn reader_writer_error_sequence_is_concrete() {
        let sys = reader_writer();
        let err = min_basis(OrderKind::Cover, [Config::new_counts(1, vec![0, 1])]);
        let out = model_check(&sys, &err).unwrap();
        let seq = reachable_error_sequence(&sys, &out).unwrap();
        assert_eq!(seq.sets.len(), 3);
        for c in &seq.sets[0] {
            assert!(crate::semantics::is_initial(&sys, c));
        }
        for c in seq.sets.last().unwrap() {
            assert!(err.covers(c));
        }
    }

    #[test]
    fn min_error_size_is_one_reader() {
        let sys = reader_writer();
        let err = min_basis(OrderKind::Cover, [Config::new_counts(1, vec![0, 1])]);
        match max_safe_size(&sys, &err).unwrap() {
            MaxSafeSize::Bounded { min_error_size } => assert_eq!(min_error_size, 1),
            MaxSafeSize::SafeForAll => panic!("expected a bounded size"),
        }
    }
}
