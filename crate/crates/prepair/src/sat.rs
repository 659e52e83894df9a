//! Embedded deterministic SAT solving for repair queries.
//!
//! Formulas over transition atoms are translated to CNF via the Tseitin
//! encoding and solved by a small DPLL procedure with unit propagation and
//! chronological backtracking. Determinism is part of the contract: decision
//! variables are tried in index order (transition atoms first, in input-file
//! order) with default polarity *true* ("keep the transition"), so identical
//! inputs always produce identical repairs.
//!
//! A preference list of full candidate assignments (sets of transitions to
//! remove) can be supplied; candidates are tried in order against the
//! formula before falling back to search.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::constraints::Constraint;
use crate::PrepairError;

/// CNF produced by the Tseitin encoding. Variables are 1-based; variables
/// `1..=n_atoms` are the transition atoms, higher variables are auxiliary.
#[derive(Debug, Clone)]
pub struct Cnf {
    pub n_vars: usize,
    pub n_atoms: usize,
    pub clauses: Vec<Vec<i64>>,
}

/// Tseitin encoding of `formula` over `n_atoms` transition atoms.
pub fn tseitin(formula: &Constraint, n_atoms: usize) -> Cnf {
    let mut cnf = Cnf { n_vars: n_atoms, n_atoms, clauses: Vec::new() };
    let f = formula.clone().simplify();
    match f {
        Constraint::True => {}
        Constraint::False => cnf.clauses.push(vec![]),
        other => {
            let root = encode(&other, &mut cnf);
            cnf.clauses.push(vec![root]);
        }
    }
    cnf
}

/// Returns the literal representing `c`, adding defining clauses as needed.
fn encode(c: &Constraint, cnf: &mut Cnf) -> i64 {
    match c {
        Constraint::Lit(a, pos) => {
            let v = (*a + 1) as i64;
            if *pos {
                v
            } else {
                -v
            }
        }
        Constraint::And(parts) => {
            let lits: Vec<i64> = parts.iter().map(|p| encode(p, cnf)).collect();
            cnf.n_vars += 1;
            let v = cnf.n_vars as i64;
            for &l in &lits {
                cnf.clauses.push(vec![-v, l]);
            }
            let mut long = vec![v];
            long.extend(lits.iter().map(|l| -l));
            cnf.clauses.push(long);
            v
        }
        Constraint::Or(parts) => {
            let lits: Vec<i64> = parts.iter().map(|p| encode(p, cnf)).collect();
            cnf.n_vars += 1;
            let v = cnf.n_vars as i64;
            for &l in &lits {
                cnf.clauses.push(vec![v, -l]);
            }
            let mut long = vec![-v];
            long.extend(lits.iter().copied());
            cnf.clauses.push(long);
            v
        }
        // `simplify` removes constants below the root.
        Constraint::True | Constraint::False => {
            unreachable!("constants must be simplified away before encoding")
        }
    }
}

/// DIMACS rendering with a comment header mapping atom variables to
/// transition ids.
pub fn to_dimacs(cnf: &Cnf, ids: &[&str]) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate().take(cnf.n_atoms) {
        let _ = writeln!(out, "c var {} = {}", i + 1, id);
    }
    let _ = writeln!(out, "p cnf {} {}", cnf.n_vars, cnf.clauses.len());
    for clause in &cnf.clauses {
        let lits = clause
            .iter()
            .map(i64::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(out, "{} 0", if lits.is_empty() { String::new() } else { lits });
    }
    out
}

/// Result of a solver call, projected to the transition atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatResult {
    /// `assignment[a]` is true iff transition atom `a` is kept.
    Sat(Vec<bool>),
    Unsat,
}

/// Solve `formula`. `prefer` lists candidate removal sets (atoms assigned
/// false, everything else true) tried in order before DPLL search.
pub fn solve(formula: &Constraint, n_atoms: usize, prefer: &[BTreeSet<usize>]) -> SatResult {
    for removal in prefer {
        let assignment: Vec<bool> = (0..n_atoms).map(|a| !removal.contains(&a)).collect();
        if formula.eval(&assignment) {
            return SatResult::Sat(assignment);
        }
    }
    let cnf = tseitin(formula, n_atoms);
    match dpll(&cnf) {
        Some(model) => SatResult::Sat(model[1..=n_atoms].iter().map(|v| *v == Some(true)).collect()),
        None => SatResult::Unsat,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrailKind {
    Decision,
    Implied,
}

/// Plain DPLL: unit propagation, index-order decisions with polarity `true`,
/// chronological backtracking. Returns a model indexed by variable (index 0
/// unused) or `None` if unsatisfiable.
fn dpll(cnf: &Cnf) -> Option<Vec<Option<bool>>> {
    if cnf.clauses.iter().any(Vec::is_empty) {
        return None;
    }
    let n = cnf.n_vars;
    let mut assign: Vec<Option<bool>> = vec![None; n + 1];
    let mut trail: Vec<(usize, TrailKind)> = Vec::new();

    'search: loop {
        // Unit propagation to fixpoint.
        loop {
            let mut changed = false;
            for clause in &cnf.clauses {
                let mut unassigned: Option<i64> = None;
                let mut n_unassigned = 0usize;
                let mut satisfied = false;
                for &lit in clause {
                    let var = lit.unsigned_abs() as usize;
                    match assign[var] {
                        None => {
                            n_unassigned += 1;
                            unassigned = Some(lit);
                        }
                        Some(v) => {
                            if v == (lit > 0) {
                                satisfied = true;
                                break;
                            }
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match n_unassigned {
                    0 => {
                        // Conflict: backtrack chronologically to the most
                        // recent decision and flip it (flips are implied, so
                        // each decision is flipped at most once).
                        loop {
                            match trail.pop() {
                                None => return None,
                                Some((v, TrailKind::Implied)) => assign[v] = None,
                                Some((v, TrailKind::Decision)) => {
                                    let flipped = !assign[v].expect("assigned on trail");
                                    assign[v] = Some(flipped);
                                    trail.push((v, TrailKind::Implied));
                                    continue 'search;
                                }
                            }
                        }
                    }
                    1 => {
                        let lit = unassigned.expect("one unassigned literal");
                        let var = lit.unsigned_abs() as usize;
                        assign[var] = Some(lit > 0);
                        trail.push((var, TrailKind::Implied));
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        // Decide the lowest unassigned variable, polarity `true`.
        match (1..=n).find(|v| assign[*v].is_none()) {
            None => return Some(assign),
            Some(v) => {
                assign[v] = Some(true);
                trail.push((v, TrailKind::Decision));
            }
        }
    }
}

/// Parse a preference file: `#` comment lines and `try <id> <id> ...` lines
/// listing transitions to remove, tried in order.
pub fn parse_prefer(text: &str, ids: &[&str]) -> Result<Vec<BTreeSet<usize>>, PrepairError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("try") => {
                let mut set = BTreeSet::new();
                for name in parts {
                    let atom = ids.iter().position(|id| *id == name).ok_or_else(|| {
                        PrepairError::InvalidInput(format!(
                            "preference file line {}: unknown transition id '{name}'",
                            lineno + 1
                        ))
                    })?;
                    set.insert(atom);
                }
                out.push(set);
            }
            Some(other) => {
                return Err(PrepairError::InvalidInput(format!(
                    "preference file line {}: unknown directive '{other}'",
                    lineno + 1
                )))
            }
            None => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::Constraint as C;

    #[test]
    fn solves_simple_formulas() {
        // (a | b) & (!a | b) & (!b | c)
        let f = C::and(vec![
            C::or(vec![C::lit(0), C::lit(1)]),
            C::or(vec![C::not_lit(0), C::lit(1)]),
            C::or(vec![C::not_lit(1), C::lit(2)]),
        ]);
        match solve(&f, 3, &[]) {
            SatResult::Sat(m) => {
                assert!(f.eval(&m));
                // default polarity keeps everything
                assert_eq!(m, vec![true, true, true]);
            }
            SatResult::Unsat => panic!("expected sat"),
        }
    }

    #[test]
    fn detects_unsat() {
        let f = C::and(vec![C::lit(0), C::not_lit(0)]);
        assert_eq!(solve(&f, 1, &[]), SatResult::Unsat);
        assert_eq!(solve(&C::False, 1, &[]), SatResult::Unsat);
    }

    #[test]
    fn prefers_candidates_in_order() {
        // !a | !b : default search would keep a and drop b; a preferred
        // candidate dropping a is taken first.
        let f = C::or(vec![C::not_lit(0), C::not_lit(1)]);
        let prefer = vec![[0usize].into_iter().collect()];
        match solve(&f, 2, &prefer) {
            SatResult::Sat(m) => assert_eq!(m, vec![false, true]),
            SatResult::Unsat => panic!("expected sat"),
        }
        // unsatisfying candidates are skipped
        let prefer = vec![BTreeSet::new(), [1usize].into_iter().collect()];
        match solve(&f, 2, &prefer) {
            SatResult::Sat(m) => assert_eq!(m, vec![true, false]),
            SatResult::Unsat => panic!("expected sat"),
        }
    }

    #[test]
    fn dimacs_has_header_and_atom_comments() {
        let f = C::or(vec![C::lit(0), C::not_lit(1)]);
        let cnf = tseitin(&f, 2);
        let text = to_dimacs(&cnf, &["t1", "t2"]);
        assert!(text.contains("c var 1 = t1"));
        assert!(text.contains("p cnf"));
        assert!(text.trim_end().ends_with(" 0"));
    }
}
