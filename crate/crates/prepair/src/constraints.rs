//! Boolean constraints over transition atoms.
//!
//! Every transition of the input system is a propositional atom: `true`
//! means the transition is kept, `false` that it is removed. Repair searches
//! for an assignment satisfying the accumulated constraints; this module
//! provides the constraint AST, canonical S-expression rendering, the
//! structural constraints (relation totality, send/receive pairing, one-hot
//! receives), and the counterexample-derived constraints.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;

use crate::core::{Config, Delta, Owner, SyncDir, System, SystemKind};
use crate::mc::ErrorSequence;
use crate::semantics::{successors, Step};
use crate::PrepairError;

/// A propositional constraint over transition atoms (indices into
/// `sys.delta`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    True,
    False,
    /// Atom or negated atom.
    Lit(usize, bool),
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
}

impl Constraint {
    pub fn lit(atom: usize) -> Self {
        Constraint::Lit(atom, true)
    }

    pub fn not_lit(atom: usize) -> Self {
        Constraint::Lit(atom, false)
    }

    pub fn and(parts: Vec<Constraint>) -> Self {
        Constraint::And(parts).simplify()
    }

    pub fn or(parts: Vec<Constraint>) -> Self {
        Constraint::Or(parts).simplify()
    }

    /// Flatten nested conjunctions/disjunctions, drop neutral elements,
    /// deduplicate, and collapse dominating elements.
    pub fn simplify(self) -> Constraint {
        match self {
            Constraint::And(parts) => {
                let mut flat = Vec::new();
                for p in parts {
                    match p.simplify() {
                        Constraint::True => {}
                        Constraint::False => return Constraint::False,
                        Constraint::And(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                let mut seen = BTreeSet::new();
                flat.retain(|c| seen.insert(c.clone()));
                match flat.len() {
                    0 => Constraint::True,
                    1 => flat.pop().expect("len checked"),
                    _ => Constraint::And(flat),
                }
            }
            Constraint::Or(parts) => {
                let mut flat = Vec::new();
                for p in parts {
                    match p.simplify() {
                        Constraint::False => {}
                        Constraint::True => return Constraint::True,
                        Constraint::Or(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                let mut seen = BTreeSet::new();
                flat.retain(|c| seen.insert(c.clone()));
                match flat.len() {
                    0 => Constraint::False,
                    1 => flat.pop().expect("len checked"),
                    _ => Constraint::Or(flat),
                }
            }
            other => other,
        }
    }

    /// Evaluate under a total assignment of the atoms.
    pub fn eval(&self, assignment: &[bool]) -> bool {
        match self {
            Constraint::True => true,
            Constraint::False => false,
            Constraint::Lit(a, pos) => assignment[*a] == *pos,
            Constraint::And(ps) => ps.iter().all(|p| p.eval(assignment)),
            Constraint::Or(ps) => ps.iter().any(|p| p.eval(assignment)),
        }
    }

    /// Canonical S-expression rendering, with atoms named by `ids`.
    pub fn render(&self, ids: &[&str]) -> String {
        match self {
            Constraint::True => "true".into(),
            Constraint::False => "false".into(),
            Constraint::Lit(a, true) => ids[*a].to_string(),
            Constraint::Lit(a, false) => format!("(not {})", ids[*a]),
            Constraint::And(ps) => {
                format!("(and {})", ps.iter().map(|p| p.render(ids)).join(" "))
            }
            Constraint::Or(ps) => {
                format!("(or {})", ps.iter().map(|p| p.render(ids)).join(" "))
            }
        }
    }

    /// All atoms occurring, in first-occurrence order.
    pub fn atoms(&self, out: &mut Vec<usize>, seen: &mut BTreeSet<usize>) {
        match self {
            Constraint::Lit(a, _) => {
                if seen.insert(*a) {
                    out.push(*a);
                }
            }
            Constraint::And(ps) | Constraint::Or(ps) => {
                for p in ps {
                    p.atoms(out, seen);
                }
            }
            _ => {}
        }
    }
}

/// Parse a constraint from S-expression text; atoms are transition ids.
pub fn parse_constraint(text: &str, ids: &[&str]) -> Result<Constraint, PrepairError> {
    let tokens = tokenize(text);
    let mut pos = 0usize;
    let c = parse_expr(&tokens, &mut pos, ids)?;
    if pos != tokens.len() {
        return Err(PrepairError::InvalidInput(format!(
            "trailing tokens in constraint: {text}"
        )));
    }
    Ok(c.simplify())
}

fn tokenize(text: &str) -> Vec<String> {
    text.replace('(', " ( ")
        .replace(')', " ) ")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn parse_expr(tokens: &[String], pos: &mut usize, ids: &[&str]) -> Result<Constraint, PrepairError> {
    let err = |m: String| PrepairError::InvalidInput(m);
    let Some(tok) = tokens.get(*pos) else {
        return Err(err("unexpected end of constraint".into()));
    };
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let Some(head) = tokens.get(*pos) else {
                return Err(err("empty S-expression".into()));
            };
            let head = head.clone();
            *pos += 1;
            let mut parts = Vec::new();
            while tokens.get(*pos).map(String::as_str) != Some(")") {
                if *pos >= tokens.len() {
                    return Err(err("unbalanced parentheses in constraint".into()));
                }
                parts.push(parse_expr(tokens, pos, ids)?);
            }
            *pos += 1; // consume ')'
            match head.as_str() {
                "and" => Ok(Constraint::And(parts)),
                "or" => Ok(Constraint::Or(parts)),
                "not" => {
                    if parts.len() != 1 {
                        return Err(err("'not' takes exactly one argument".into()));
                    }
                    match parts.pop().expect("len checked") {
                        Constraint::Lit(a, p) => Ok(Constraint::Lit(a, !p)),
                        Constraint::True => Ok(Constraint::False),
                        Constraint::False => Ok(Constraint::True),
                        c => Ok(negate(c)),
                    }
                }
                other => Err(err(format!("unknown operator '{other}'"))),
            }
        }
        ")" => Err(err("unexpected ')'".into())),
        "true" => Ok(Constraint::True),
        "false" => Ok(Constraint::False),
        name => ids
            .iter()
            .position(|id| *id == name)
            .map(Constraint::lit)
            .ok_or_else(|| err(format!("unknown transition id '{name}' in constraint"))),
    }
}

fn negate(c: Constraint) -> Constraint {
    match c {
        Constraint::True => Constraint::False,
        Constraint::False => Constraint::True,
        Constraint::Lit(a, p) => Constraint::Lit(a, !p),
        Constraint::And(ps) => Constraint::Or(ps.into_iter().map(negate).collect()),
        Constraint::Or(ps) => Constraint::And(ps.into_iter().map(negate).collect()),
    }
}

// ---------------------------------------------------------------------------
// Structural constraints
// ---------------------------------------------------------------------------

/// Relation totality: every template state keeps at least one of its
/// original outgoing transitions; for broadcast systems additionally every
/// (action, state) pair keeps at least one receive.
pub fn tr_constr(sys: &System) -> Constraint {
    let mut conjuncts = Vec::new();
    match &sys.delta {
        Delta::Disj(ts) => {
            for owner in [Owner::A, Owner::B] {
                let nstates = match owner {
                    Owner::A => sys.a_states.len(),
                    Owner::B => sys.b_states.len(),
                };
                for q in 0..nstates {
                    let outs: Vec<Constraint> = ts
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.owner == owner && t.from == q)
                        .map(|(i, _)| Constraint::lit(i))
                        .collect();
                    if !outs.is_empty() {
                        conjuncts.push(Constraint::Or(outs));
                    }
                }
            }
        }
        Delta::Sync(ts) => {
            for owner in [Owner::A, Owner::B] {
                let nstates = match owner {
                    Owner::A => sys.a_states.len(),
                    Owner::B => sys.b_states.len(),
                };
                for q in 0..nstates {
                    let outs: Vec<Constraint> = ts
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.owner == owner && t.from == q)
                        .map(|(i, _)| Constraint::lit(i))
                        .collect();
                    if !outs.is_empty() {
                        conjuncts.push(Constraint::Or(outs));
                    }
                }
            }
            if sys.kind == SystemKind::Broadcast {
                // Receive totality: broadcasts must always be receivable.
                let mut groups: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
                for (i, t) in ts.iter().enumerate() {
                    if t.dir == SyncDir::BRecv {
                        groups.entry((t.action.clone(), t.from)).or_default().push(i);
                    }
                }
                for opts in groups.values() {
                    conjuncts.push(Constraint::Or(
                        opts.iter().map(|i| Constraint::lit(*i)).collect(),
                    ));
                }
            }
        }
    }
    Constraint::and(conjuncts)
}

/// Send/receive pairing: for each action, either some send and some matching
/// receive are kept, or the action is dropped entirely.
pub fn pairing_constr(sys: &System) -> Constraint {
    let Delta::Sync(ts) = &sys.delta else {
        return Constraint::True;
    };
    let send_dir = match sys.kind {
        SystemKind::Rendezvous => SyncDir::Send,
        SystemKind::Broadcast => SyncDir::BSend,
        SystemKind::Disjunctive => return Constraint::True,
    };
    let recv_dir = match sys.kind {
        SystemKind::Rendezvous => SyncDir::Recv,
        _ => SyncDir::BRecv,
    };
    let actions: BTreeSet<&String> = ts
        .iter()
        .filter(|t| t.dir == send_dir)
        .map(|t| &t.action)
        .collect();
    let mut conjuncts = Vec::new();
    for a in actions {
        let sends: Vec<usize> = ts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.dir == send_dir && &t.action == a)
            .map(|(i, _)| i)
            .collect();
        let recvs: Vec<usize> = ts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.dir == recv_dir && &t.action == a)
            .map(|(i, _)| i)
            .collect();
        let live = Constraint::And(vec![
            Constraint::Or(sends.iter().map(|i| Constraint::lit(*i)).collect()),
            Constraint::Or(recvs.iter().map(|i| Constraint::lit(*i)).collect()),
        ]);
        let dead = Constraint::And(
            sends
                .iter()
                .chain(&recvs)
                .map(|i| Constraint::not_lit(*i))
                .collect(),
        );
        conjuncts.push(Constraint::Or(vec![live, dead]));
    }
    Constraint::and(conjuncts)
}

/// Exactly one of the given atoms is true.
fn one_of(atoms: &[usize]) -> Constraint {
    Constraint::Or(
        atoms
            .iter()
            .map(|&j| {
                Constraint::And(
                    atoms
                        .iter()
                        .map(|&l| Constraint::Lit(l, l == j))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// One-hot receives: for each action and each user state with receive
/// options, exactly one option is kept (deterministic reception).
pub fn one_hot_receive_constr(sys: &System) -> Constraint {
    let Delta::Sync(ts) = &sys.delta else {
        return Constraint::True;
    };
    let mut groups: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (i, t) in ts.iter().enumerate() {
        if t.owner == Owner::B && matches!(t.dir, SyncDir::Recv | SyncDir::BRecv) {
            groups.entry((t.action.clone(), t.from)).or_default().push(i);
        }
    }
    Constraint::and(groups.values().map(|opts| one_of(opts)).collect())
}

// ---------------------------------------------------------------------------
// Counterexample constraints
// ---------------------------------------------------------------------------

/// Constraint excluding every path through the reachable error sets: for
/// each step of each path, at least one local transition that fired must be
/// removed. `seq.sets[0]` are initial configurations, the last set errors.
///
/// `sys` is the current candidate; `atom_map[i]` translates its `i`-th
/// transition to the corresponding atom of the original system.
///
/// The recursion follows the structure of the sets: a conjunct per step into
/// the next set, each offering the choice of cutting this step or all
/// continuations (memoized on configuration and depth).
pub fn counterexample_constr(
    sys: &System,
    atom_map: &[usize],
    seq: &ErrorSequence,
) -> Result<Constraint, PrepairError> {
    let mut memo: BTreeMap<(Config, usize), Constraint> = BTreeMap::new();
    let mut parts = Vec::new();
    for s in &seq.sets[0] {
        parts.push(constr_rec(sys, atom_map, s, &seq.sets[1..], &mut memo)?);
    }
    Ok(Constraint::and(parts))
}

fn constr_rec(
    sys: &System,
    atom_map: &[usize],
    s: &Config,
    rest: &[BTreeSet<Config>],
    memo: &mut BTreeMap<(Config, usize), Constraint>,
) -> Result<Constraint, PrepairError> {
    let Some(next) = rest.first() else {
        // `s` itself is an error configuration with no step left to cut.
        return Ok(Constraint::False);
    };
    let key = (s.clone(), rest.len());
    if let Some(c) = memo.get(&key) {
        return Ok(c.clone());
    }
    let mut conjuncts = Vec::new();
    for Step { fired, target } in successors(sys, s)? {
        if !next.contains(&target) {
            continue;
        }
        let mut choice: Vec<Constraint> = fired
            .iter()
            .map(|t| Constraint::not_lit(atom_map[*t]))
            .collect();
        if rest.len() > 1 {
            choice.push(constr_rec(sys, atom_map, &target, &rest[1..], memo)?);
        }
        conjuncts.push(Constraint::or(choice));
    }
    let c = Constraint::and(conjuncts);
    memo.insert(key, c.clone());
    Ok(c)
}

/// Single-path variant: only the lexicographically first concrete path
/// through the sets is excluded (one clause).
pub fn single_path_constr(
    sys: &System,
    atom_map: &[usize],
    seq: &ErrorSequence,
) -> Result<Constraint, PrepairError> {
    let mut fired_atoms: BTreeSet<usize> = BTreeSet::new();
    let mut current = seq.sets[0].iter().next().cloned().ok_or_else(|| {
        PrepairError::InvalidInput("internal: empty initial set in error sequence".into())
    })?;
    for next in &seq.sets[1..] {
        let step = successors(sys, &current)?
            .into_iter()
            .find(|s| next.contains(&s.target))
            .ok_or_else(|| {
                PrepairError::InvalidInput(
                    "internal: no step into the next reachable error set".into(),
                )
            })?;
        fired_atoms.extend(step.fired.iter().map(|t| atom_map[*t]));
        current = step.target;
    }
    Ok(Constraint::or(
        fired_atoms.into_iter().map(Constraint::not_lit).collect(),
    ))
}

/// Blocking clause for the naive mode: exclude exactly the current
/// assignment (keep-set).
pub fn blocking_clause(n_atoms: usize, kept: &BTreeSet<usize>) -> Constraint {
    Constraint::or(
        (0..n_atoms)
            .map(|a| Constraint::Lit(a, !kept.contains(&a)))
            .collect(),
    )
}
