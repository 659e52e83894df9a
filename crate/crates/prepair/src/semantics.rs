//! Concrete and symbolic semantics: guard satisfaction, successor steps, and
//! minimal predecessor bases for the three system classes (plus the safety
//! product for disjunctive systems).

use std::collections::{BTreeMap, BTreeSet};

use crate::core::{
    Config, Delta, DisjTransition, Owner, StateRef, SyncDir, SyncTransition, System, SystemKind,
};
use crate::PrepairError;

/// One global step: the local transitions that fired (indices into
/// `sys.delta`) and the resulting configuration. For disjunctive systems a
/// step fires exactly one local transition; for rendezvous a send/receive
/// pair (or a single `tau`); for broadcast the sender plus every receive
/// transition taken by at least one process.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Step {
    pub fired: Vec<usize>,
    pub target: Config,
}

/// The process attempting to move (used for guard evaluation, where the
/// mover itself may not serve as its own witness).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mover {
    Controller,
    /// Anonymous B-process currently in the given state.
    Counted(usize),
    /// Explicitly tracked B-process with the given index.
    Explicit(usize),
}

/// Does some process other than `mover` occupy `guard` in `cfg`?
fn guard_sat(cfg: &Config, mover: Mover, guard: StateRef) -> bool {
    match guard.owner {
        Owner::A => {
            // The controller can witness for any B-process, but not for
            // itself: a controller move guarded by a controller state can
            // never fire.
            mover != Mover::Controller && cfg.a_state == Some(guard.idx)
        }
        Owner::B => {
            let explicit_at = cfg
                .explicit
                .iter()
                .enumerate()
                .filter(|(p, s)| **s == guard.idx && Mover::Explicit(*p) != mover)
                .count() as u64;
            let mover_occupies = matches!(mover, Mover::Counted(i) if i == guard.idx);
            let counted_at = cfg.counts[guard.idx].saturating_sub(u64::from(mover_occupies));
            explicit_at + counted_at >= 1
        }
    }
}

fn disj_transitions(sys: &System) -> &[DisjTransition] {
    match &sys.delta {
        Delta::Disj(v) => v,
        Delta::Sync(_) => panic!("disjunctive transitions requested on a sync system"),
    }
}

fn sync_transitions(sys: &System) -> &[SyncTransition] {
    match &sys.delta {
        Delta::Sync(v) => v,
        Delta::Disj(_) => panic!("sync transitions requested on a disjunctive system"),
    }
}

/// Minimal `d` with `d >= src` pointwise and `d - src + tgt >= cp` pointwise,
/// where `src`/`tgt` are the multiset vectors of process sources and targets
/// of a move. Unique because both constraints are per-coordinate lower
/// bounds.
fn pullback(cp: &[u64], src: &[u64], tgt: &[u64]) -> Result<Vec<u64>, PrepairError> {
    let mut d = Vec::with_capacity(cp.len());
    for x in 0..cp.len() {
        let need = cp[x]
            .checked_add(src[x])
            .ok_or(PrepairError::CounterOverflow)?
            .saturating_sub(tgt[x]);
        d.push(need.max(src[x]));
    }
    Ok(d)
}

fn unit(len: usize, i: usize, k: u64) -> Vec<u64> {
    let mut v = vec![0; len];
    v[i] = k;
    v
}

/// All ways to write `total` as an ordered sum of `parts` non-negative terms.
fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Successors
// ---------------------------------------------------------------------------

/// All global steps from `cfg`. Deterministic order (sorted, deduplicated).
pub fn successors(sys: &System, cfg: &Config) -> Result<Vec<Step>, PrepairError> {
    let mut steps: BTreeSet<Step> = BTreeSet::new();
    match sys.kind {
        SystemKind::Disjunctive => disj_successors(sys, cfg, &mut steps)?,
        SystemKind::Rendezvous => rendezvous_successors(sys, cfg, &mut steps)?,
        SystemKind::Broadcast => broadcast_successors(sys, cfg, &mut steps)?,
    }
    Ok(steps.into_iter().collect())
}

fn disj_successors(
    sys: &System,
    cfg: &Config,
    steps: &mut BTreeSet<Step>,
) -> Result<(), PrepairError> {
    let mut raw: Vec<Step> = Vec::new();
    for (ti, t) in disj_transitions(sys).iter().enumerate() {
        match t.owner {
            Owner::A => {
                if cfg.a_state == Some(t.from) && guard_sat(cfg, Mover::Controller, t.guard) {
                    let mut c = cfg.clone();
                    c.a_state = Some(t.to);
                    raw.push(Step { fired: vec![ti], target: c });
                }
            }
            Owner::B => {
                if cfg.counts[t.from] >= 1 && guard_sat(cfg, Mover::Counted(t.from), t.guard) {
                    let c = cfg.sub(t.from, 1).expect("checked count").add(t.to, 1)?;
                    raw.push(Step { fired: vec![ti], target: c });
                }
                for p in 0..cfg.explicit.len() {
                    if cfg.explicit[p] == t.from && guard_sat(cfg, Mover::Explicit(p), t.guard) {
                        let mut c = cfg.clone();
                        c.explicit[p] = t.to;
                        raw.push(Step { fired: vec![ti], target: c });
                    }
                }
            }
        }
    }
    if let Some(aut) = &sys.automaton {
        // The automaton reads the observation of the configuration being
        // left. Runs falling into the implicit non-accepting sink are
        // dropped: they can never reach an accepting state.
        let from = cfg.aut.expect("product configuration without automaton state");
        let a_state = cfg.a_state.expect("product configuration without controller");
        for q in aut.step(from, a_state, &cfg.explicit) {
            for s in &raw {
                let mut target = s.target.clone();
                target.aut = Some(q);
                steps.insert(Step { fired: s.fired.clone(), target });
            }
        }
    } else {
        steps.extend(raw);
    }
    Ok(())
}

fn rendezvous_successors(
    sys: &System,
    cfg: &Config,
    steps: &mut BTreeSet<Step>,
) -> Result<(), PrepairError> {
    let delta = sync_transitions(sys);
    let a_state = cfg.a_state.expect("rendezvous configuration without controller");
    let move_b = |c: &Config, i: usize, j: usize| -> Result<Option<Vec<u64>>, PrepairError> {
        Ok(match c.sub(i, 1) {
            Some(c2) => Some(c2.add(j, 1)?.counts),
            None => None,
        })
    };
    for (si, s) in delta.iter().enumerate() {
        match s.dir {
            SyncDir::Tau => match s.owner {
                Owner::A if a_state == s.from => {
                    let mut c = cfg.clone();
                    c.a_state = Some(s.to);
                    steps.insert(Step { fired: vec![si], target: c });
                }
                Owner::B => {
                    if let Some(counts) = move_b(cfg, s.from, s.to)? {
                        let mut c = cfg.clone();
                        c.counts = counts;
                        steps.insert(Step { fired: vec![si], target: c });
                    }
                }
                _ => {}
            },
            SyncDir::Send => {
                for (ri, r) in delta.iter().enumerate() {
                    if r.dir != SyncDir::Recv || r.action != s.action {
                        continue;
                    }
                    match (s.owner, r.owner) {
                        (Owner::A, Owner::B) => {
                            if a_state != s.from {
                                continue;
                            }
                            if let Some(counts) = move_b(cfg, r.from, r.to)? {
                                let mut c = cfg.clone();
                                c.a_state = Some(s.to);
                                c.counts = counts;
                                steps.insert(Step { fired: vec![si, ri], target: c });
                            }
                        }
                        (Owner::B, Owner::A) => {
                            if a_state != r.from {
                                continue;
                            }
                            if let Some(counts) = move_b(cfg, s.from, s.to)? {
                                let mut c = cfg.clone();
                                c.a_state = Some(r.to);
                                c.counts = counts;
                                steps.insert(Step { fired: vec![si, ri], target: c });
                            }
                        }
                        (Owner::B, Owner::B) => {
                            // Sender and receiver are distinct processes: if
                            // they start in the same local state, two
                            // processes must be present there.
                            let needed = if s.from == r.from { 2 } else { 1 };
                            if cfg.counts[s.from] < needed.max(1)
                                || cfg.counts[r.from] < if s.from == r.from { needed } else { 1 }
                            {
                                continue;
                            }
                            let c1 = cfg.sub(s.from, 1).expect("checked").add(s.to, 1)?;
                            if let Some(counts) = move_b(&c1, r.from, r.to)? {
                                let mut c = cfg.clone();
                                c.counts = counts;
                                steps.insert(Step { fired: vec![si, ri], target: c });
                            }
                        }
                        (Owner::A, Owner::A) => {} // single controller
                    }
                }
            }
            SyncDir::Recv | SyncDir::BSend | SyncDir::BRecv => {}
        }
    }
    Ok(())
}

/// Receive options per (action, B-state), in declaration order.
pub fn receive_options(sys: &System) -> BTreeMap<(String, usize), Vec<usize>> {
    let mut map: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (ti, t) in sync_transitions(sys).iter().enumerate() {
        if t.dir == SyncDir::BRecv {
            map.entry((t.action.clone(), t.from)).or_default().push(ti);
        }
    }
    map
}

fn broadcast_successors(
    sys: &System,
    cfg: &Config,
    steps: &mut BTreeSet<Step>,
) -> Result<(), PrepairError> {
    let delta = sync_transitions(sys);
    let recv = receive_options(sys);
    let nstates = sys.b_states.len();
    for (si, s) in delta.iter().enumerate() {
        match s.dir {
            SyncDir::Tau => {
                if let Some(c2) = cfg.sub(s.from, 1) {
                    steps.insert(Step { fired: vec![si], target: c2.add(s.to, 1)? });
                }
            }
            SyncDir::BSend => {
                let Some(v) = cfg.sub(s.from, 1) else { continue };
                // Every remaining process takes one receive transition of
                // this action from its current state; processes in the same
                // state may choose differently.
                let occupied: Vec<usize> = (0..nstates).filter(|x| v.counts[*x] >= 1).collect();
                let per_state: Vec<(usize, Vec<usize>, Vec<Vec<u64>>)> = occupied
                    .iter()
                    .map(|&x| {
                        let opts = recv
                            .get(&(s.action.clone(), x))
                            .cloned()
                            .unwrap_or_default();
                        let dists = compositions(v.counts[x], opts.len());
                        (x, opts, dists)
                    })
                    .collect();
                if per_state.iter().any(|(_, opts, _)| opts.is_empty()) {
                    return Err(PrepairError::InvalidInput(format!(
                        "broadcast action '{}' lacks a receive transition for an occupied state",
                        s.action
                    )));
                }
                let mut stack: Vec<(usize, Vec<u64>, Vec<usize>)> =
                    vec![(0, vec![0; nstates], Vec::new())];
                while let Some((depth, out, used)) = stack.pop() {
                    if depth == per_state.len() {
                        let mut counts = out;
                        counts[s.to] = counts[s.to]
                            .checked_add(1)
                            .ok_or(PrepairError::CounterOverflow)?;
                        let mut fired = vec![si];
                        fired.extend(used.iter().copied());
                        let target = Config { counts, ..cfg.clone() };
                        steps.insert(Step { fired, target });
                        continue;
                    }
                    let (_, opts, dists) = &per_state[depth];
                    for dist in dists {
                        let mut out2 = out.clone();
                        let mut used2 = used.clone();
                        for (o, n) in opts.iter().zip(dist) {
                            if *n > 0 {
                                let to = delta[*o].to;
                                out2[to] = out2[to]
                                    .checked_add(*n)
                                    .ok_or(PrepairError::CounterOverflow)?;
                                used2.push(*o);
                            }
                        }
                        stack.push((depth + 1, out2, used2));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Predecessor bases
// ---------------------------------------------------------------------------

/// Minimal configurations whose upward closure (under the coverability
/// order) is the predecessor set of the upward closure of `target`. The
/// caller minimizes across targets and transitions.
pub fn pred_basis(sys: &System, target: &Config) -> Result<Vec<Config>, PrepairError> {
    match sys.kind {
        SystemKind::Disjunctive => disj_pred_basis(sys, target),
        SystemKind::Rendezvous => rendezvous_pred_basis(sys, target),
        SystemKind::Broadcast => broadcast_pred_basis(sys, target),
    }
}

/// Raise `d[g]` so that a witness other than the mover occupies guard state
/// `g` (B-state); `mover_from_g` marks a counted mover leaving `g` itself.
fn bump_guard(d: &mut [u64], explicit: &[usize], skip_explicit: Option<usize>, g: usize, mover_from_g: bool) {
    let explicit_witness = explicit
        .iter()
        .enumerate()
        .any(|(p, s)| *s == g && Some(p) != skip_explicit);
    if !explicit_witness {
        let need = 1 + u64::from(mover_from_g);
        d[g] = d[g].max(need);
    }
}

fn disj_pred_basis(sys: &System, target: &Config) -> Result<Vec<Config>, PrepairError> {
    let nstates = sys.b_states.len();
    // Underlying predecessors, ignoring the automaton component.
    let mut raw: Vec<Config> = Vec::new();
    for t in disj_transitions(sys) {
        match t.owner {
            Owner::A => {
                if target.a_state != Some(t.to) {
                    continue;
                }
                // A controller move guarded by a controller state can never
                // fire (the controller cannot witness for itself).
                let Owner::B = t.guard.owner else { continue };
                let mut d = target.counts.clone();
                bump_guard(&mut d, &target.explicit, None, t.guard.idx, false);
                raw.push(Config {
                    a_state: Some(t.from),
                    explicit: target.explicit.clone(),
                    counts: d,
                    aut: target.aut,
                });
            }
            Owner::B => {
                // Anonymous mover.
                {
                    let guard_ok = match t.guard.owner {
                        Owner::A => target.a_state == Some(t.guard.idx),
                        Owner::B => true,
                    };
                    if guard_ok {
                        let mut d = pullback(
                            &target.counts,
                            &unit(nstates, t.from, 1),
                            &unit(nstates, t.to, 1),
                        )?;
                        if let Owner::B = t.guard.owner {
                            bump_guard(
                                &mut d,
                                &target.explicit,
                                None,
                                t.guard.idx,
                                t.guard.idx == t.from,
                            );
                        }
                        raw.push(Config { counts: d, ..target.clone() });
                    }
                }
                // Explicit movers.
                for p in 0..target.explicit.len() {
                    if target.explicit[p] != t.to {
                        continue;
                    }
                    let guard_ok = match t.guard.owner {
                        Owner::A => target.a_state == Some(t.guard.idx),
                        Owner::B => true,
                    };
                    if !guard_ok {
                        continue;
                    }
                    let mut e = target.explicit.clone();
                    e[p] = t.from;
                    let mut d = target.counts.clone();
                    if let Owner::B = t.guard.owner {
                        bump_guard(&mut d, &e, Some(p), t.guard.idx, false);
                    }
                    raw.push(Config { explicit: e, counts: d, ..target.clone() });
                }
            }
        }
    }
    // Invert the automaton component: the automaton read the observation of
    // the predecessor's own discrete part.
    if let Some(aut) = &sys.automaton {
        let to = target.aut.expect("product target without automaton state");
        let mut out = Vec::new();
        for cand in raw {
            let a_state = cand.a_state.expect("product configuration without controller");
            for tr in &aut.transitions {
                if tr.to == to && tr.obs.eval(a_state, &cand.explicit) {
                    let mut c = cand.clone();
                    c.aut = Some(tr.from);
                    out.push(c);
                }
            }
        }
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn rendezvous_pred_basis(sys: &System, target: &Config) -> Result<Vec<Config>, PrepairError> {
    let delta = sync_transitions(sys);
    let nstates = sys.b_states.len();
    let a_target = target.a_state.expect("rendezvous configuration without controller");
    let mut out = Vec::new();
    let b_move = |srcs: &[usize], tgts: &[usize], a_state: usize| -> Result<Config, PrepairError> {
        let mut src = vec![0u64; nstates];
        let mut tgt = vec![0u64; nstates];
        for &i in srcs {
            src[i] += 1;
        }
        for &j in tgts {
            tgt[j] += 1;
        }
        let d = pullback(&target.counts, &src, &tgt)?;
        Ok(Config::new_counts(a_state, d))
    };
    for s in delta {
        match (s.dir, s.owner) {
            (SyncDir::Tau, Owner::A) => {
                if a_target == s.to {
                    out.push(Config::new_counts(s.from, target.counts.clone()));
                }
            }
            (SyncDir::Tau, Owner::B) => {
                out.push(b_move(&[s.from], &[s.to], a_target)?);
            }
            (SyncDir::Send, _) => {
                for r in delta.iter().filter(|r| r.dir == SyncDir::Recv && r.action == s.action) {
                    match (s.owner, r.owner) {
                        (Owner::A, Owner::B) => {
                            if a_target == s.to {
                                out.push(b_move(&[r.from], &[r.to], s.from)?);
                            }
                        }
                        (Owner::B, Owner::A) => {
                            if a_target == r.to {
                                out.push(b_move(&[s.from], &[s.to], r.from)?);
                            }
                        }
                        (Owner::B, Owner::B) => {
                            out.push(b_move(&[s.from, r.from], &[s.to, r.to], a_target)?);
                        }
                        (Owner::A, Owner::A) => {}
                    }
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

fn broadcast_pred_basis(sys: &System, target: &Config) -> Result<Vec<Config>, PrepairError> {
    let delta = sync_transitions(sys);
    let recv = receive_options(sys);
    let nstates = sys.b_states.len();
    let mut out = Vec::new();
    for s in delta {
        match s.dir {
            SyncDir::Tau => {
                let d = pullback(
                    &target.counts,
                    &unit(nstates, s.from, 1),
                    &unit(nstates, s.to, 1),
                )?;
                out.push(Config::broadcast(d));
            }
            SyncDir::BSend => {
                // Residual demand the receivers must produce, after
                // discounting the sender's own arrival.
                let mut r = target.counts.clone();
                r[s.to] = r[s.to].saturating_sub(1);
                // Per demanded state y: the receive transitions producing y.
                let demanded: Vec<(usize, Vec<usize>)> = (0..nstates)
                    .filter(|y| r[*y] > 0)
                    .map(|y| {
                        let producers: Vec<usize> = recv
                            .values()
                            .flat_map(|v| v.iter())
                            .copied()
                            .filter(|&o| delta[o].action == s.action && delta[o].to == y)
                            .collect();
                        (y, producers)
                    })
                    .collect();
                if demanded.iter().any(|(_, p)| p.is_empty()) {
                    continue; // some demand cannot be produced by any receiver
                }
                // Distribute each demand over its producers; receivers start
                // in the producers' source states.
                let mut stack: Vec<(usize, Vec<u64>)> = vec![(0, vec![0u64; nstates])];
                while let Some((depth, v)) = stack.pop() {
                    if depth == demanded.len() {
                        let mut c = v;
                        c[s.from] = c[s.from].checked_add(1).ok_or(PrepairError::CounterOverflow)?;
                        out.push(Config::broadcast(c));
                        continue;
                    }
                    let (y, producers) = &demanded[depth];
                    for dist in compositions(r[*y], producers.len()) {
                        let mut v2 = v.clone();
                        for (o, n) in producers.iter().zip(&dist) {
                            let from = delta[*o].from;
                            v2[from] = v2[from]
                                .checked_add(*n)
                                .ok_or(PrepairError::CounterOverflow)?;
                        }
                        stack.push((depth + 1, v2));
                    }
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Initial configurations
// ---------------------------------------------------------------------------

/// The initial configuration with `n` anonymous B-processes.
pub fn initial_config(sys: &System, n: u64) -> Config {
    let mut counts = vec![0u64; sys.b_states.len()];
    counts[sys.b_init] = n;
    Config {
        a_state: sys.has_controller().then_some(sys.a_init),
        explicit: vec![sys.b_init; sys.explicit_k()],
        counts,
        aut: sys.automaton.as_ref().map(|a| a.init),
    }
}

/// Is `cfg` an initial configuration (for some instance size)?
pub fn is_initial(sys: &System, cfg: &Config) -> bool {
    let counts_ok = cfg
        .counts
        .iter()
        .enumerate()
        .all(|(q, c)| q == sys.b_init || *c == 0);
    let size_ok = match sys.kind {
        // Broadcast instances have at least one process.
        SystemKind::Broadcast => cfg.counts[sys.b_init] >= 1,
        _ => true,
    };
    counts_ok
        && size_ok
        && cfg.a_state == sys.has_controller().then_some(sys.a_init)
        && cfg.explicit.iter().all(|s| *s == sys.b_init)
        && cfg.aut == sys.automaton.as_ref().map(|a| a.init)
}

/// If the upward closure of `basis_elem` (coverability order) contains an
/// initial configuration, return the least such configuration.
pub fn initial_witness(sys: &System, basis_elem: &Config) -> Option<Config> {
    let pattern_ok = basis_elem
        .counts
        .iter()
        .enumerate()
        .all(|(q, c)| q == sys.b_init || *c == 0);
    if !pattern_ok
        || basis_elem.a_state != sys.has_controller().then_some(sys.a_init)
        || !basis_elem.explicit.iter().all(|s| *s == sys.b_init)
        || basis_elem.aut != sys.automaton.as_ref().map(|a| a.init)
    {
        return None;
    }
    let mut w = basis_elem.clone();
    if sys.kind == SystemKind::Broadcast && w.counts[sys.b_init] == 0 {
        w.counts[sys.b_init] = 1;
    }
    Some(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compositions_cover_all_splits() {
        assert_eq!(compositions(2, 2), vec![vec![0, 2], vec![1, 1], vec![2, 0]]);
        assert_eq!(compositions(0, 3).len(), 1);
        assert_eq!(compositions(3, 1), vec![vec![3]]);
        assert!(compositions(1, 0).is_empty());
    }

    #[test]
    fn pullback_is_minimal_pre_image() {
        // move one process from state 0 to state 1
        let d = pullback(&[0, 2, 1], &[1, 0, 0], &[0, 1, 0]).unwrap();
        assert_eq!(d, vec![1, 1, 1]);
        // self-loop needs one process but does not raise the bound
        let d = pullback(&[3, 0], &[1, 0], &[1, 0]).unwrap();
        assert_eq!(d, vec![3, 0]);
    }
}
