//! Randomized invariant checks for the core data structures, the symbolic
//! predecessor computation, the constraint language, and the SAT layer.

use prepair::constraints::{
    blocking_clause, counterexample_constr, parse_constraint, tr_constr, Constraint,
};
use prepair::core::{
    leq, min_basis, Config, Delta, DisjTransition, OrderKind, Owner, StateRef, System,
    SystemKind,
};
use prepair::mc::{model_check, reachable_error_sequence};
use prepair::oracle::{enumerate_box, pred_oracle};
use prepair::sat::{solve, tseitin, to_dimacs, SatResult};
use prepair::semantics::{pred_basis, successors};

use proptest::prelude::*;

const NB: usize = 3;

fn config_strategy() -> impl Strategy<Value = Config> {
    (0..2usize, proptest::collection::vec(0..4u64, NB))
        .prop_map(|(a, counts)| Config::new_counts(a, counts))
}

fn constraint_strategy(n_atoms: usize) -> impl Strategy<Value = Constraint> {
    let leaf = prop_oneof![
        Just(Constraint::True),
        Just(Constraint::False),
        (0..n_atoms, any::<bool>()).prop_map(|(a, p)| Constraint::Lit(a, p)),
    ];
    leaf.prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            proptest::collection::vec(inner.clone(), 0..4).prop_map(Constraint::and),
            proptest::collection::vec(inner, 0..4).prop_map(Constraint::or),
        ]
    })
}

#[derive(Debug, Clone)]
struct RawTransition {
    owner: Owner,
    from: usize,
    guard_a: bool,
    guard: usize,
    to: usize,
}

fn system_strategy() -> impl Strategy<Value = System> {
    let tr = (
        any::<bool>(),
        0..3usize,
        any::<bool>(),
        0..3usize,
        0..3usize,
    )
        .prop_map(|(is_a, from, guard_a, guard, to)| RawTransition {
            owner: if is_a { Owner::A } else { Owner::B },
            from,
            guard_a,
            guard,
            to,
        });
    (2..=3usize, 2..=3usize, proptest::collection::vec(tr, 1..=6)).prop_map(
        |(na, nb, raw)| {
            let delta = raw
                .into_iter()
                .enumerate()
                .map(|(i, r)| DisjTransition {
                    id: format!("t{i}"),
                    origin: format!("t{i}"),
                    owner: r.owner,
                    from: r.from
                        % match r.owner {
                            Owner::A => na,
                            Owner::B => nb,
                        },
                    guard: if r.guard_a {
                        StateRef::a(r.guard % na)
                    } else {
                        StateRef::b(r.guard % nb)
                    },
                    to: r.to
                        % match r.owner {
                            Owner::A => na,
                            Owner::B => nb,
                        },
                })
                .collect();
            System {
                kind: SystemKind::Disjunctive,
                name: "prop".into(),
                a_states: (0..na).map(|i| format!("a{i}")).collect(),
                a_init: 0,
                b_states: (0..nb).map(|i| format!("b{i}")).collect(),
                b_init: 0,
                delta: Delta::Disj(delta),
                automaton: None,
            }
        },
    )
}

fn brute_force_sat(f: &Constraint, n_atoms: usize) -> Option<Vec<bool>> {
    (0u32..(1 << n_atoms))
        .map(|mask| (0..n_atoms).map(|a| mask & (1 << a) != 0).collect::<Vec<bool>>())
        .find(|assignment| f.eval(assignment))
}

proptest! {
    /// Minimization keeps exactly the upward closure and yields an antichain
    /// of elements drawn from the input.
    #[test]
    fn min_basis_is_antichain_with_same_closure(
        configs in proptest::collection::vec(config_strategy(), 1..12),
        probe in config_strategy(),
        order in prop_oneof![Just(OrderKind::Cover), Just(OrderKind::CoverZero)],
    ) {
        let basis = min_basis(order, configs.clone());
        let elems: Vec<&Config> = basis.iter().collect();
        for (i, x) in elems.iter().enumerate() {
            prop_assert!(configs.contains(x));
            for (j, y) in elems.iter().enumerate() {
                if i != j {
                    prop_assert!(!leq(order, x, y), "basis is not an antichain");
                }
            }
        }
        let direct = configs.iter().any(|c| leq(order, c, &probe));
        prop_assert_eq!(basis.covers(&probe), direct);
    }

    /// The zero-pattern order refines the plain coverability order, and both
    /// are reflexive.
    #[test]
    fn order_laws(x in config_strategy(), y in config_strategy()) {
        prop_assert!(leq(OrderKind::Cover, &x, &x));
        prop_assert!(leq(OrderKind::CoverZero, &x, &x));
        if leq(OrderKind::CoverZero, &x, &y) {
            prop_assert!(leq(OrderKind::Cover, &x, &y));
        }
    }

    /// Strong compatibility: a step from a smaller configuration can be
    /// replayed verbatim from any larger one.
    #[test]
    fn steps_are_compatible_with_cover(
        sys in system_strategy(),
        small in config_strategy(),
        extra in proptest::collection::vec(0..2u64, NB),
    ) {
        let small = Config::new_counts(
            small.a_state.unwrap() % sys.a_states.len(),
            small.counts[..sys.b_states.len()].to_vec(),
        );
        let mut counts = small.counts.clone();
        for (i, e) in extra.iter().enumerate().take(counts.len()) {
            counts[i] += e;
        }
        let big = Config::new_counts(small.a_state.unwrap(), counts);
        for step in successors(&sys, &small).unwrap() {
            let replay = successors(&sys, &big).unwrap();
            prop_assert!(
                replay.iter().any(|s| s.fired == step.fired
                    && leq(OrderKind::Cover, &step.target, &s.target)),
                "step {:?} from {:?} not replayable from {:?}",
                step.fired, small, big
            );
        }
    }

    /// The symbolic predecessor basis denotes exactly the one-step
    /// predecessors of the target's upward closure (checked on a bounded box).
    #[test]
    fn pred_basis_matches_bounded_oracle(
        sys in system_strategy(),
        target in config_strategy(),
    ) {
        let target = Config::new_counts(
            target.a_state.unwrap() % sys.a_states.len(),
            target.counts[..sys.b_states.len()].to_vec(),
        );
        let up = min_basis(OrderKind::Cover, [target.clone()]);
        let basis = min_basis(OrderKind::Cover, pred_basis(&sys, &target).unwrap());
        let oracle = pred_oracle(&sys, &up, 4).unwrap();
        for c in enumerate_box(&sys, 4) {
            prop_assert_eq!(basis.covers(&c), oracle.contains(&c), "at {:?}", c);
        }
    }

    /// Simplification, rendering, and parsing all preserve semantics.
    #[test]
    fn constraint_roundtrip_preserves_semantics(f in constraint_strategy(5)) {
        let ids = ["t0", "t1", "t2", "t3", "t4"];
        let simplified = f.clone().simplify();
        let reparsed = parse_constraint(&f.render(&ids), &ids).unwrap();
        for mask in 0u32..(1 << 5) {
            let assignment: Vec<bool> = (0..5).map(|a| mask & (1 << a) != 0).collect();
            let v = f.eval(&assignment);
            prop_assert_eq!(simplified.eval(&assignment), v, "simplify changed semantics");
            prop_assert_eq!(reparsed.eval(&assignment), v, "render/parse changed semantics");
        }
    }

    /// The solver is sound, complete, and deterministic on small formulas.
    #[test]
    fn solver_agrees_with_brute_force(f in constraint_strategy(6)) {
        let first = solve(&f, 6, &[]);
        prop_assert_eq!(&first, &solve(&f, 6, &[]), "solver is nondeterministic");
        match first {
            SatResult::Sat(assignment) => {
                prop_assert_eq!(assignment.len(), 6);
                prop_assert!(f.eval(&assignment), "model does not satisfy the formula");
            }
            SatResult::Unsat => {
                prop_assert!(brute_force_sat(&f, 6).is_none(), "missed a model");
            }
        }
    }

    /// A satisfying preferred removal set is returned verbatim.
    #[test]
    fn solver_honors_preferences(
        f in constraint_strategy(6),
        removal in proptest::collection::btree_set(0..6usize, 0..=6),
    ) {
        let expected: Vec<bool> = (0..6).map(|a| !removal.contains(&a)).collect();
        if f.eval(&expected) {
            prop_assert_eq!(solve(&f, 6, &[removal]), SatResult::Sat(expected));
        }
    }

    /// The Tseitin encoding has a sound shape: clause count matches the
    /// header, literals stay within the declared variable range, and the
    /// DIMACS text lists one comment per transition atom.
    #[test]
    fn dimacs_shape(f in constraint_strategy(5)) {
        let cnf = tseitin(&f, 5);
        for clause in &cnf.clauses {
            for lit in clause {
                prop_assert!(*lit != 0 && lit.unsigned_abs() as usize <= cnf.n_vars);
            }
        }
        let ids = ["t0", "t1", "t2", "t3", "t4"];
        let text = to_dimacs(&cnf, &ids);
        let mut lines = text.lines();
        for id in ids {
            let line = lines.next().unwrap();
            prop_assert!(line.starts_with("c var ") && line.ends_with(id));
        }
        let header = lines.next().unwrap();
        prop_assert_eq!(
            header,
            format!("p cnf {} {}", cnf.n_vars, cnf.clauses.len())
        );
        prop_assert_eq!(lines.count(), cnf.clauses.len());
    }

    /// A blocking clause excludes exactly the blocked assignment.
    #[test]
    fn blocking_clause_excludes_one_assignment(
        kept in proptest::collection::btree_set(0..6usize, 0..=6),
        probe in proptest::collection::vec(any::<bool>(), 6),
    ) {
        let clause = blocking_clause(6, &kept);
        let blocked: Vec<bool> = (0..6).map(|a| kept.contains(&a)).collect();
        prop_assert!(!clause.eval(&blocked));
        if probe != blocked {
            prop_assert!(clause.eval(&probe));
        }
    }

    /// Whenever the check finds a concrete error sequence, the derived
    /// constraint rejects the unrestricted relation, and the totality
    /// constraint accepts it.
    #[test]
    fn counterexample_constraint_cuts_the_relation(sys in system_strategy()) {
        let errors = min_basis(
            OrderKind::Cover,
            [Config::new_counts(
                sys.a_states.len() - 1,
                {
                    let mut c = vec![0; sys.b_states.len()];
                    c[sys.b_states.len() - 1] = 1;
                    c
                },
            )],
        );
        let outcome = model_check(&sys, &errors).unwrap();
        let all_true = vec![true; sys.delta.len()];
        prop_assert!(tr_constr(&sys).eval(&all_true));
        if !outcome.safe {
            let seq = reachable_error_sequence(&sys, &outcome).unwrap();
            let atom_map: Vec<usize> = (0..sys.delta.len()).collect();
            let constr = counterexample_constr(&sys, &atom_map, &seq).unwrap();
            prop_assert!(
                !constr.eval(&all_true),
                "constraint fails to exclude the unrestricted relation"
            );
        }
    }
}
