//! Independent explicit-state oracles for cross-checking the symbolic
//! analyses on finite instances and bounded state boxes.

use std::collections::{BTreeSet, VecDeque};

use crate::core::{Config, System, UpSet};
use crate::semantics::{initial_config, successors};
use crate::PrepairError;

/// All configurations reachable from `start` (finite for fixed instance
/// sizes, since steps preserve the number of processes).
pub fn reach_set(sys: &System, start: &Config) -> Result<BTreeSet<Config>, PrepairError> {
    let mut seen: BTreeSet<Config> = BTreeSet::from([start.clone()]);
    let mut queue: VecDeque<Config> = VecDeque::from([start.clone()]);
    while let Some(cfg) = queue.pop_front() {
        for s in successors(sys, &cfg)? {
            if seen.insert(s.target.clone()) {
                queue.push_back(s.target);
            }
        }
    }
    Ok(seen)
}

/// Is some configuration in the upward closure of `err` reachable in the
/// instance with `n` anonymous B-processes? Returns a witness.
pub fn explicit_reach(
    sys: &System,
    n: u64,
    err: &UpSet,
) -> Result<Option<Config>, PrepairError> {
    let start = initial_config(sys, n);
    Ok(reach_set(sys, &start)?.into_iter().find(|c| err.covers(c)))
}

/// Can `start` reach the upward closure of `target`?
pub fn can_reach_cover(
    sys: &System,
    start: &Config,
    target: &UpSet,
) -> Result<bool, PrepairError> {
    Ok(reach_set(sys, start)?.iter().any(|c| target.covers(c)))
}

/// Enumerate every configuration whose counts are bounded by `bound`
/// pointwise (all discrete parts). Intended for small bounds only.
pub fn enumerate_box(sys: &System, bound: u64) -> Vec<Config> {
    let nb = sys.b_states.len();
    let mut counts_list: Vec<Vec<u64>> = vec![vec![]];
    for _ in 0..nb {
        counts_list = counts_list
            .into_iter()
            .flat_map(|v| {
                (0..=bound).map(move |c| {
                    let mut v2 = v.clone();
                    v2.push(c);
                    v2
                })
            })
            .collect();
    }
    let a_options: Vec<Option<usize>> = if sys.has_controller() {
        (0..sys.a_states.len()).map(Some).collect()
    } else {
        vec![None]
    };
    let k = sys.explicit_k();
    let mut explicit_list: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..k {
        explicit_list = explicit_list
            .into_iter()
            .flat_map(|v| {
                (0..nb).map(move |s| {
                    let mut v2 = v.clone();
                    v2.push(s);
                    v2
                })
            })
            .collect();
    }
    let aut_options: Vec<Option<usize>> = match &sys.automaton {
        Some(a) => (0..a.states.len()).map(Some).collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for a in &a_options {
        for e in &explicit_list {
            for counts in &counts_list {
                for aut in &aut_options {
                    out.push(Config {
                        a_state: *a,
                        explicit: e.clone(),
                        counts: counts.clone(),
                        aut: *aut,
                    });
                }
            }
        }
    }
    out
}

/// One-step predecessor oracle: configurations in the box from which a
/// single step lands in the upward closure of `target`.
pub fn pred_oracle(
    sys: &System,
    target: &UpSet,
    bound: u64,
) -> Result<BTreeSet<Config>, PrepairError> {
    let mut out = BTreeSet::new();
    for cfg in enumerate_box(sys, bound) {
        for s in successors(sys, &cfg)? {
            if target.covers(&s.target) {
                out.insert(cfg);
                break;
            }
        }
    }
    Ok(out)
}
