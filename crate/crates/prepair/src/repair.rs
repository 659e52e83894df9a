//! Counterexample-guided repair: iteratively model check a candidate
//! restriction of the transition relation, turn counterexamples (error paths
//! and deadlock witnesses) into propositional constraints over transition
//! atoms, and query the embedded SAT solver for the next candidate.
//! Restriction is always applied to the *original* system, so constraints
//! accumulate monotonically and every candidate is tried at most once.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::constraints::{
    blocking_clause, counterexample_constr, single_path_constr, tr_constr, Constraint,
};
use crate::core::{Config, Delta, System, SystemKind, UpSet};
use crate::deadlock::{detect_deadlock, pr_overapprox, DeadlockOutcome};
use crate::mc::{model_check, reachable_error_sequence};
use crate::sat::{solve, tseitin, to_dimacs, SatResult};
use crate::semantics::successors;
use crate::PrepairError;

/// Constraint-generation strategy for unsafe candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Exclude every path through the reachable error sets.
    Full,
    /// Exclude only the lexicographically first concrete error path.
    SinglePath,
    /// Exclude only the failed candidate assignment (pure generate-and-test).
    Naive,
}

#[derive(Debug, Clone)]
pub struct RepairOptions {
    pub mode: Mode,
    pub check_deadlock: bool,
    /// Bound on model-check calls before giving up.
    pub max_iter: usize,
    /// Candidate removal sets tried (in order) at every SAT call.
    pub prefer: Vec<BTreeSet<usize>>,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions { mode: Mode::Full, check_deadlock: true, max_iter: 10_000, prefer: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RepairVerdict {
    Repaired { kept: Vec<String>, removed: Vec<String> },
    Unrealizable,
}

/// One pass of the loop: a model-check call plus whatever followed it.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    pub safe: bool,
    /// Deadlock verdict if the deadlock check ran this iteration.
    pub deadlock_found: Option<bool>,
    /// Newly added constraint (canonical S-expression), if any.
    pub new_constr: Option<String>,
    /// Whether the new constraint rules out the candidate it was derived
    /// from (progress guarantee).
    pub excludes_candidate: Option<bool>,
    /// DIMACS rendering of the SAT query issued this iteration.
    pub dimacs: Option<String>,
    /// Removed-transition ids of the next candidate chosen by the solver.
    pub removed_after: Option<Vec<String>>,
    /// Sizes of the reachable error sets (initial end first), if unsafe.
    pub error_set_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepairReport {
    pub verdict: RepairVerdict,
    pub model_check_calls: usize,
    pub history: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    /// Structural + user constraints (canonical S-expression).
    pub init_constr: String,
    /// Final accumulated counterexample constraint.
    pub accum_constr: String,
}

/// Restrict `sys` to the transitions in `kept`; returns the restricted
/// system and a map from its transition indices to the original atoms.
pub fn restrict(sys: &System, kept: &BTreeSet<usize>) -> (System, Vec<usize>) {
    let mut out = sys.clone();
    let mut map = Vec::new();
    match (&sys.delta, &mut out.delta) {
        (Delta::Disj(v), Delta::Disj(o)) => {
            o.clear();
            for (i, t) in v.iter().enumerate() {
                if kept.contains(&i) {
                    map.push(i);
                    o.push(t.clone());
                }
            }
        }
        (Delta::Sync(v), Delta::Sync(o)) => {
            o.clear();
            for (i, t) in v.iter().enumerate() {
                if kept.contains(&i) {
                    map.push(i);
                    o.push(t.clone());
                }
            }
        }
        _ => unreachable!("restrict preserves the delta variant"),
    }
    (out, map)
}

/// Deadlock-elimination constraint: for every witness, either cut a
/// transition on the path into the deadlock, or restore an exit of the
/// original system that is enabled at the deadlocked configuration.
fn deadlock_constraint(
    original: &System,
    witnesses: &[(BTreeSet<usize>, Config)],
) -> Result<Constraint, PrepairError> {
    let mut conjuncts = Vec::new();
    for (path_atoms, deadlocked) in witnesses {
        let mut options: Vec<Constraint> = path_atoms
            .iter()
            .map(|a| Constraint::not_lit(*a))
            .collect();
        for step in successors(original, deadlocked)? {
            options.push(Constraint::and(
                step.fired.iter().map(|a| Constraint::lit(*a)).collect(),
            ));
        }
        conjuncts.push(Constraint::or(options));
    }
    Ok(Constraint::and(conjuncts))
}

/// Run the repair loop. `init_constr` holds the structural and user
/// constraints (it should contain at least [`tr_constr`], see
/// [`crate::constraints`]); `errors` is the error basis in the coverability
/// order.
pub fn repair(
    sys: &System,
    errors: &UpSet,
    init_constr: &Constraint,
    opts: &RepairOptions,
) -> Result<RepairReport, PrepairError> {
    let n_atoms = sys.delta.len();
    let ids: Vec<&str> = sys.delta.ids();
    // Relation totality is always required, independent of user constraints.
    let init = Constraint::and(vec![tr_constr(sys), init_constr.clone()]);
    let mut accum = Constraint::True;
    let mut kept: BTreeSet<usize> = (0..n_atoms).collect();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut mc_calls = 0usize;
    let mut broadcast_warned = false;

    loop {
        let (cand, cand_map) = restrict(sys, &kept);
        let outcome = model_check(&cand, errors)?;
        mc_calls += 1;
        if mc_calls > opts.max_iter {
            return Err(PrepairError::IterationLimit(opts.max_iter as u64));
        }
        let mut rec = IterationRecord {
            index: mc_calls,
            safe: outcome.safe,
            deadlock_found: None,
            new_constr: None,
            excludes_candidate: None,
            dimacs: None,
            removed_after: None,
            error_set_sizes: None,
        };

        let new_constr: Option<Constraint> = if !outcome.safe {
            let seq = reachable_error_sequence(&cand, &outcome)?;
            rec.error_set_sizes = Some(seq.sets.iter().map(BTreeSet::len).collect());
            Some(match opts.mode {
                Mode::Full => counterexample_constr(&cand, &cand_map, &seq)?,
                Mode::SinglePath => single_path_constr(&cand, &cand_map, &seq)?,
                Mode::Naive => blocking_clause(n_atoms, &kept),
            })
        } else if opts.check_deadlock {
            match sys.kind {
                SystemKind::Broadcast => {
                    if !broadcast_warned {
                        warnings.push(
                            "deadlock detection is not supported for broadcast systems; \
                             the deadlock check was skipped"
                                .into(),
                        );
                        broadcast_warned = true;
                    }
                    None
                }
                SystemKind::Disjunctive => {
                    let dl = detect_deadlock(&cand)?;
                    match dl {
                        DeadlockOutcome::NoDeadlock { .. } => {
                            rec.deadlock_found = Some(false);
                            None
                        }
                        DeadlockOutcome::Deadlock { witnesses, .. } => {
                            rec.deadlock_found = Some(true);
                            let ws: Vec<(BTreeSet<usize>, Config)> = witnesses
                                .into_iter()
                                .map(|w| {
                                    let atoms =
                                        w.path_atoms.iter().map(|a| cand_map[*a]).collect();
                                    (atoms, w.deadlocked)
                                })
                                .collect();
                            Some(deadlock_constraint(sys, &ws)?)
                        }
                    }
                }
                SystemKind::Rendezvous => {
                    let (over, over_map) = pr_overapprox(&cand)?;
                    let dl = detect_deadlock(&over)?;
                    match dl {
                        DeadlockOutcome::NoDeadlock { .. } => {
                            rec.deadlock_found = Some(false);
                            None
                        }
                        DeadlockOutcome::Deadlock { witnesses, .. } => {
                            rec.deadlock_found = Some(true);
                            let ws: Vec<(BTreeSet<usize>, Config)> = witnesses
                                .into_iter()
                                .map(|w| {
                                    let atoms = w
                                        .path_atoms
                                        .iter()
                                        .map(|a| cand_map[over_map[*a]])
                                        .collect();
                                    (atoms, w.deadlocked)
                                })
                                .collect();
                            Some(deadlock_constraint(sys, &ws)?)
                        }
                    }
                }
            }
        } else {
            None
        };

        let Some(new_constr) = new_constr else {
            history.push(rec);
            let removed: Vec<String> = (0..n_atoms)
                .filter(|a| !kept.contains(a))
                .map(|a| ids[a].to_string())
                .collect();
            let kept_ids: Vec<String> = kept.iter().map(|a| ids[*a].to_string()).collect();
            return Ok(RepairReport {
                verdict: RepairVerdict::Repaired { kept: kept_ids, removed },
                model_check_calls: mc_calls,
                history,
                warnings,
                init_constr: init.render(&ids),
                accum_constr: accum.render(&ids),
            });
        };

        let current: Vec<bool> = (0..n_atoms).map(|a| kept.contains(&a)).collect();
        rec.excludes_candidate = Some(!new_constr.eval(&current));
        rec.new_constr = Some(new_constr.render(&ids));
        accum = Constraint::and(vec![accum, new_constr]);
        let query = Constraint::and(vec![accum.clone(), init.clone()]);
        rec.dimacs = Some(to_dimacs(&tseitin(&query, n_atoms), &ids));
        match solve(&query, n_atoms, &opts.prefer) {
            SatResult::Unsat => {
                history.push(rec);
                return Ok(RepairReport {
                    verdict: RepairVerdict::Unrealizable,
                    model_check_calls: mc_calls,
                    history,
                    warnings,
                    init_constr: init.render(&ids),
                    accum_constr: accum.render(&ids),
                });
            }
            SatResult::Sat(assignment) => {
                kept = assignment
                    .iter()
                    .enumerate()
                    .filter_map(|(a, keep)| keep.then_some(a))
                    .collect();
                rec.removed_after = Some(
                    (0..n_atoms)
                        .filter(|a| !kept.contains(a))
                        .map(|a| ids[a].to_string())
                        .collect(),
                );
                history.push(rec);
            }
        }
    }
}
