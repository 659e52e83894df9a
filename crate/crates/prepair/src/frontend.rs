//! JSON input format: templates, transitions, error bases, constraint flags,
//! and the optional safety automaton. Guards with several states are split
//! into singleton-guard copies here; repairs operate at split granularity
//! and report the original transition via its `origin` id.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::constraints::{parse_constraint, Constraint};
use crate::core::{
    min_basis, AutTransition, Automaton, Config, Delta, DisjTransition, ObsFormula, OrderKind,
    Owner, StateRef, SyncDir, SyncTransition, System, SystemKind, UpSet,
};
use crate::PrepairError;

/// A fully parsed and validated verification/repair problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: System,
    /// Error basis (coverability order).
    pub errors: UpSet,
    pub pairing: bool,
    pub one_hot_receive: bool,
    pub extra: Vec<Constraint>,
}

impl Problem {
    /// The structural + user constraint conjunction used to seed repair.
    pub fn init_constr(&self) -> Constraint {
        let mut parts = vec![crate::constraints::tr_constr(&self.system)];
        if self.pairing {
            parts.push(crate::constraints::pairing_constr(&self.system));
        }
        if self.one_hot_receive {
            parts.push(crate::constraints::one_hot_receive_constr(&self.system));
        }
        parts.extend(self.extra.iter().cloned());
        Constraint::and(parts)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProblem {
    kind: String,
    #[serde(default)]
    name: Option<String>,
    templates: Vec<FileTemplate>,
    #[serde(default)]
    errors: Vec<FileError>,
    #[serde(default)]
    constraints: FileConstraints,
    #[serde(default)]
    automaton: Option<FileAutomaton>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTemplate {
    role: String,
    states: Vec<String>,
    init: String,
    transitions: Vec<FileTransition>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTransition {
    #[serde(default)]
    id: Option<String>,
    from: String,
    #[serde(default)]
    guard: Vec<String>,
    #[serde(default)]
    action: Option<String>,
    #[serde(default)]
    dir: Option<String>,
    to: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConstraints {
    #[serde(default)]
    pairing: bool,
    #[serde(default)]
    one_hot_receive: bool,
    #[serde(default)]
    extra: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileError {
    #[serde(default)]
    a_state: Option<String>,
    #[serde(default)]
    counts: BTreeMap<String, u64>,
    #[serde(default)]
    explicit: Option<Vec<String>>,
    #[serde(default)]
    aut_state: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAutomaton {
    states: Vec<String>,
    init: String,
    accepting: Vec<String>,
    transitions: Vec<FileAutTransition>,
    #[serde(default)]
    explicit_b: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileAutTransition {
    from: String,
    obs: String,
    to: String,
}

fn err(msg: impl Into<String>) -> PrepairError {
    PrepairError::InvalidInput(msg.into())
}

/// Parse a problem from JSON text.
pub fn parse_problem(text: &str) -> Result<Problem, PrepairError> {
    let file: FileProblem =
        serde_json::from_str(text).map_err(|e| err(format!("JSON parse error: {e}")))?;
    let kind = match file.kind.as_str() {
        "disjunctive" => SystemKind::Disjunctive,
        "rendezvous" => SystemKind::Rendezvous,
        "broadcast" => SystemKind::Broadcast,
        other => return Err(err(format!("unknown system kind '{other}'"))),
    };

    let tmpl_a = file.templates.iter().find(|t| t.role == "A");
    let tmpl_b = file
        .templates
        .iter()
        .find(|t| t.role == "B")
        .ok_or_else(|| err("missing user template (role \"B\")"))?;
    if let Some(bad) = file.templates.iter().find(|t| t.role != "A" && t.role != "B") {
        return Err(err(format!("unknown template role '{}'", bad.role)));
    }
    if kind == SystemKind::Broadcast {
        if tmpl_a.is_some() {
            return Err(err("broadcast systems have no controller template"));
        }
    } else if tmpl_a.is_none() {
        return Err(err(format!("{kind} systems require a controller template (role \"A\")")));
    }

    let a_states: Vec<String> = tmpl_a.map(|t| t.states.clone()).unwrap_or_default();
    let b_states = tmpl_b.states.clone();
    {
        let mut seen = BTreeSet::new();
        for s in a_states.iter().chain(&b_states) {
            if !seen.insert(s) {
                return Err(err(format!("state name '{s}' is not unique across templates")));
            }
        }
    }
    let a_init = match tmpl_a {
        Some(t) => a_states
            .iter()
            .position(|s| *s == t.init)
            .ok_or_else(|| err(format!("unknown initial controller state '{}'", t.init)))?,
        None => 0,
    };
    let b_init = b_states
        .iter()
        .position(|s| *s == tmpl_b.init)
        .ok_or_else(|| err(format!("unknown initial user state '{}'", tmpl_b.init)))?;

    let mut sys = System {
        kind,
        name: file.name.unwrap_or_else(|| "unnamed".into()),
        a_states,
        a_init,
        b_states,
        b_init,
        delta: match kind {
            SystemKind::Disjunctive => Delta::Disj(Vec::new()),
            _ => Delta::Sync(Vec::new()),
        },
        automaton: None,
    };

    // Transitions, in file order (A template first if present).
    let mut counter = 0usize;
    let mut ids_seen: BTreeSet<String> = BTreeSet::new();
    let ordered: Vec<(&FileTemplate, Owner)> = file
        .templates
        .iter()
        .map(|t| (t, if t.role == "A" { Owner::A } else { Owner::B }))
        .collect();
    for (tmpl, owner) in ordered {
        let states = match owner {
            Owner::A => &sys.a_states,
            Owner::B => &sys.b_states,
        };
        for tr in &tmpl.transitions {
            let id = tr.id.clone().unwrap_or_else(|| format!("T{counter}"));
            counter += 1;
            if !ids_seen.insert(id.clone()) {
                return Err(err(format!("duplicate transition id '{id}'")));
            }
            let from = states
                .iter()
                .position(|s| *s == tr.from)
                .ok_or_else(|| err(format!("transition '{id}': unknown state '{}'", tr.from)))?;
            let to = states
                .iter()
                .position(|s| *s == tr.to)
                .ok_or_else(|| err(format!("transition '{id}': unknown state '{}'", tr.to)))?;
            match (&mut sys.delta, kind) {
                (Delta::Disj(v), SystemKind::Disjunctive) => {
                    if tr.dir.is_some() || tr.action.is_some() {
                        return Err(err(format!(
                            "transition '{id}': disjunctive transitions take a guard, not an action"
                        )));
                    }
                    if tr.guard.is_empty() {
                        return Err(err(format!("transition '{id}': empty guard")));
                    }
                    let single = tr.guard.len() == 1;
                    for gname in &tr.guard {
                        let guard = resolve_guard(&sys.a_states, &sys.b_states, gname)
                            .ok_or_else(|| {
                                err(format!("transition '{id}': unknown guard state '{gname}'"))
                            })?;
                        v.push(DisjTransition {
                            id: if single { id.clone() } else { format!("{id}#{gname}") },
                            origin: id.clone(),
                            owner,
                            from,
                            guard,
                            to,
                        });
                    }
                }
                (Delta::Sync(v), k) => {
                    if !tr.guard.is_empty() {
                        return Err(err(format!(
                            "transition '{id}': {k} transitions take an action, not a guard"
                        )));
                    }
                    let dir = match tr.dir.as_deref() {
                        Some("tau") | None => SyncDir::Tau,
                        Some("send") => SyncDir::Send,
                        Some("recv") => SyncDir::Recv,
                        Some("bsend") => SyncDir::BSend,
                        Some("brecv") => SyncDir::BRecv,
                        Some(other) => {
                            return Err(err(format!(
                                "transition '{id}': unknown direction '{other}'"
                            )))
                        }
                    };
                    let dir_ok = match k {
                        SystemKind::Rendezvous => {
                            matches!(dir, SyncDir::Tau | SyncDir::Send | SyncDir::Recv)
                        }
                        SystemKind::Broadcast => {
                            matches!(dir, SyncDir::Tau | SyncDir::BSend | SyncDir::BRecv)
                        }
                        SystemKind::Disjunctive => unreachable!(),
                    };
                    if !dir_ok {
                        return Err(err(format!(
                            "transition '{id}': direction '{dir}' is not valid in a {k} system"
                        )));
                    }
                    let action = match (dir, &tr.action) {
                        (SyncDir::Tau, a) => a.clone().unwrap_or_default(),
                        (_, Some(a)) => a.clone(),
                        (_, None) => {
                            return Err(err(format!(
                                "transition '{id}': synchronizing transitions need an action"
                            )))
                        }
                    };
                    v.push(SyncTransition { id, owner, from, action, dir, to });
                }
                _ => unreachable!("delta variant fixed by kind"),
            }
        }
    }

    validate_sync(&sys)?;

    // Safety automaton (disjunctive only).
    if let Some(fa) = &file.automaton {
        if kind != SystemKind::Disjunctive {
            return Err(err("safety automata are supported for disjunctive systems only"));
        }
        let find = |name: &str| {
            fa.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| err(format!("unknown automaton state '{name}'")))
        };
        let init = find(&fa.init)?;
        let accepting = fa
            .accepting
            .iter()
            .map(|s| find(s))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let mut transitions = Vec::new();
        for t in &fa.transitions {
            transitions.push(AutTransition {
                from: find(&t.from)?,
                obs: parse_obs(&t.obs, &sys, fa.explicit_b)?,
                obs_text: t.obs.clone(),
                to: find(&t.to)?,
            });
        }
        sys.automaton = Some(Automaton {
            states: fa.states.clone(),
            init,
            accepting,
            transitions,
            explicit_k: fa.explicit_b,
        });
    }

    // Error basis.
    let mut errors: Vec<Config> = Vec::new();
    for e in &file.errors {
        errors.extend(parse_error(&sys, e)?);
    }
    if errors.is_empty() {
        match &sys.automaton {
            Some(aut) => {
                // Default: every configuration whose monitor state is
                // accepting, minimal counts, any discrete part.
                let k = aut.explicit_k;
                let mut discs: Vec<Vec<usize>> = vec![vec![]];
                for _ in 0..k {
                    discs = discs
                        .into_iter()
                        .flat_map(|v| {
                            (0..sys.b_states.len()).map(move |s| {
                                let mut v2 = v.clone();
                                v2.push(s);
                                v2
                            })
                        })
                        .collect();
                }
                for a in 0..sys.a_states.len() {
                    for e in &discs {
                        for q in &aut.accepting {
                            errors.push(Config {
                                a_state: Some(a),
                                explicit: e.clone(),
                                counts: vec![0; sys.b_states.len()],
                                aut: Some(*q),
                            });
                        }
                    }
                }
            }
            None => return Err(err("no error configurations given")),
        }
    }
    let errors = min_basis(OrderKind::Cover, errors);

    // User constraints over (split) transition ids.
    let ids = sys.delta.ids();
    let ids: Vec<&str> = ids.to_vec();
    let extra = file
        .constraints
        .extra
        .iter()
        .map(|s| parse_constraint(s, &ids))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Problem {
        system: sys,
        errors,
        pairing: file.constraints.pairing,
        one_hot_receive: file.constraints.one_hot_receive,
        extra,
    })
}

fn resolve_guard(a_states: &[String], b_states: &[String], name: &str) -> Option<StateRef> {
    if let Some(i) = a_states.iter().position(|s| s == name) {
        return Some(StateRef::a(i));
    }
    b_states.iter().position(|s| s == name).map(StateRef::b)
}

/// Send uniqueness and broadcast receive totality.
fn validate_sync(sys: &System) -> Result<(), PrepairError> {
    let Delta::Sync(ts) = &sys.delta else { return Ok(()) };
    let send_dir = match sys.kind {
        SystemKind::Rendezvous => SyncDir::Send,
        SystemKind::Broadcast => SyncDir::BSend,
        SystemKind::Disjunctive => return Ok(()),
    };
    let mut send_count: BTreeMap<&str, usize> = BTreeMap::new();
    for t in ts {
        if t.dir == send_dir {
            *send_count.entry(t.action.as_str()).or_default() += 1;
        }
    }
    if let Some((a, n)) = send_count.iter().find(|(_, n)| **n > 1) {
        return Err(err(format!(
            "action '{a}' has {n} send transitions; each action must be sent by exactly one \
             local transition"
        )));
    }
    if sys.kind == SystemKind::Broadcast {
        for action in send_count.keys() {
            for (q, qname) in sys.b_states.iter().enumerate() {
                let has = ts
                    .iter()
                    .any(|t| t.dir == SyncDir::BRecv && t.action == *action && t.from == q);
                if !has {
                    return Err(err(format!(
                        "broadcast receive totality violated: state '{qname}' has no receive \
                         for action '{action}'"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn parse_error(sys: &System, e: &FileError) -> Result<Vec<Config>, PrepairError> {
    let mut counts = vec![0u64; sys.b_states.len()];
    for (name, c) in &e.counts {
        let i = sys
            .b_states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| err(format!("error entry: unknown user state '{name}'")))?;
        counts[i] = *c;
    }
    let a_state = match (&e.a_state, sys.has_controller()) {
        (Some(name), true) => Some(
            sys.a_states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| err(format!("error entry: unknown controller state '{name}'")))?,
        ),
        (None, true) => {
            return Err(err("error entry: 'a_state' is required for systems with a controller"))
        }
        (Some(_), false) => {
            return Err(err("error entry: broadcast systems have no controller state"))
        }
        (None, false) => None,
    };
    let k = sys.explicit_k();
    let explicit: Vec<usize> = match &e.explicit {
        Some(names) => {
            if names.len() != k {
                return Err(err(format!(
                    "error entry: expected {k} explicit process states, got {}",
                    names.len()
                )));
            }
            names
                .iter()
                .map(|n| {
                    sys.b_states
                        .iter()
                        .position(|s| s == n)
                        .ok_or_else(|| err(format!("error entry: unknown user state '{n}'")))
                })
                .collect::<Result<_, _>>()?
        }
        None if k == 0 => Vec::new(),
        None => {
            return Err(err("error entry: 'explicit' is required when the automaton tracks \
                            explicit processes"))
        }
    };
    let base = Config { a_state, explicit, counts, aut: None };
    match (&sys.automaton, &e.aut_state) {
        (None, None) => Ok(vec![base]),
        (None, Some(_)) => Err(err("error entry: 'aut_state' given but no automaton defined")),
        (Some(aut), Some(name)) => {
            let q = aut
                .states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| err(format!("error entry: unknown automaton state '{name}'")))?;
            Ok(vec![Config { aut: Some(q), ..base }])
        }
        (Some(aut), None) => Ok(aut
            .accepting
            .iter()
            .map(|q| Config { aut: Some(*q), ..base.clone() })
            .collect()),
    }
}

// ---------------------------------------------------------------------------
// Observation formulas
// ---------------------------------------------------------------------------

/// Grammar: conjunctions of (possibly negated) state atoms. A controller
/// state name means "the controller is in that state"; `<user-state>_<k>`
/// means "explicit process k (1-based) is in that state". `&`, `&&` and
/// `and` conjoin; `!` and `not` negate; parentheses group; `true` is allowed.
pub fn parse_obs(text: &str, sys: &System, explicit_k: usize) -> Result<ObsFormula, PrepairError> {
    let tokens = obs_tokens(text);
    let mut pos = 0usize;
    let f = parse_obs_conj(&tokens, &mut pos, sys, explicit_k)?;
    if pos != tokens.len() {
        return Err(err(format!("trailing tokens in observation '{text}'")));
    }
    Ok(f)
}

fn obs_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' | '!' | '&' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                if ch == '&' && out.last().map(String::as_str) == Some("&") {
                    continue; // treat '&&' as '&'
                }
                out.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_obs_conj(
    tokens: &[String],
    pos: &mut usize,
    sys: &System,
    k: usize,
) -> Result<ObsFormula, PrepairError> {
    let mut f = parse_obs_term(tokens, pos, sys, k)?;
    while matches!(tokens.get(*pos).map(String::as_str), Some("&") | Some("and")) {
        *pos += 1;
        let rhs = parse_obs_term(tokens, pos, sys, k)?;
        f = ObsFormula::And(Box::new(f), Box::new(rhs));
    }
    Ok(f)
}

fn parse_obs_term(
    tokens: &[String],
    pos: &mut usize,
    sys: &System,
    k: usize,
) -> Result<ObsFormula, PrepairError> {
    let Some(tok) = tokens.get(*pos) else {
        return Err(err("unexpected end of observation"));
    };
    *pos += 1;
    match tok.as_str() {
        "!" | "not" => Ok(ObsFormula::Not(Box::new(parse_obs_term(tokens, pos, sys, k)?))),
        "(" => {
            let f = parse_obs_conj(tokens, pos, sys, k)?;
            if tokens.get(*pos).map(String::as_str) != Some(")") {
                return Err(err("missing ')' in observation"));
            }
            *pos += 1;
            Ok(f)
        }
        "true" => Ok(ObsFormula::True),
        name => {
            if let Some(i) = sys.a_states.iter().position(|s| s == name) {
                return Ok(ObsFormula::AState(i));
            }
            // explicit process atom: <user-state>_<index>
            if let Some(split) = name.rfind('_') {
                let (state, idx) = (&name[..split], &name[split + 1..]);
                if let (Some(s), Ok(p)) = (
                    sys.b_states.iter().position(|x| x == state),
                    idx.parse::<usize>(),
                ) {
                    if p == 0 || p > k {
                        return Err(err(format!(
                            "observation atom '{name}': explicit process index out of range \
                             (1..={k})"
                        )));
                    }
                    return Ok(ObsFormula::Explicit { proc: p - 1, state: s });
                }
            }
            Err(err(format!("unknown observation atom '{name}'")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_disjunctive_system() {
        let text = r#"{
            "kind": "disjunctive",
            "name": "demo",
            "templates": [
                {"role": "A", "states": ["a0", "a1"], "init": "a0",
                 "transitions": [{"id": "t", "from": "a0", "guard": ["b0", "b1"], "to": "a1"}]},
                {"role": "B", "states": ["b0", "b1"], "init": "b0",
                 "transitions": [{"from": "b0", "guard": ["a0"], "to": "b1"}]}
            ],
            "errors": [{"a_state": "a1", "counts": {"b1": 1}}]
        }"#;
        let p = parse_problem(text).unwrap();
        // guard split into two copies plus the defaulted-id transition
        assert_eq!(p.system.delta.len(), 3);
        assert_eq!(p.system.delta.ids(), vec!["t#b0", "t#b1", "T1"]);
        assert_eq!(p.errors.len(), 1);
    }

    #[test]
    fn rejects_duplicate_state_names() {
        let text = r#"{
            "kind": "disjunctive",
            "templates": [
                {"role": "A", "states": ["x"], "init": "x", "transitions": []},
                {"role": "B", "states": ["x"], "init": "x", "transitions": []}
            ],
            "errors": [{"a_state": "x", "counts": {}}]
        }"#;
        assert!(parse_problem(text).is_err());
    }

    #[test]
    fn rejects_double_sends() {
        let text = r#"{
            "kind": "rendezvous",
            "templates": [
                {"role": "A", "states": ["a"], "init": "a", "transitions": [
                    {"from": "a", "action": "m", "dir": "send", "to": "a"}]},
                {"role": "B", "states": ["b"], "init": "b", "transitions": [
                    {"from": "b", "action": "m", "dir": "send", "to": "b"}]}
            ],
            "errors": [{"a_state": "a", "counts": {"b": 2}}]
        }"#;
        let e = parse_problem(text).unwrap_err();
        assert!(e.to_string().contains("exactly one"));
    }
}
