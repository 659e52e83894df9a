//! prepair — verification and automatic repair of parameterized concurrent
//! systems.
//!
//! A system consists of one controller template `A` and a user template `B`
//! replicated an arbitrary number of times. Three interaction classes are
//! supported: disjunctive guards, pairwise rendezvous, and broadcast.
//! The library provides:
//!
//! * backward reachability model checking over counter abstractions
//!   ([`mc::model_check`]),
//! * parameterized deadlock detection for disjunctive systems
//!   ([`deadlock::detect_deadlock`]),
//! * counterexample-guided repair that prunes nondeterministic transition
//!   relations via an embedded SAT solver ([`repair::repair`]),
//! * regular safety properties via a product with an observation automaton,
//! * explicit-state oracles for cross-checking on finite instances
//!   ([`oracle`]).

pub mod constraints;
pub mod core;
pub mod deadlock;
pub mod frontend;
pub mod mc;
pub mod oracle;
pub mod repair;
pub mod sat;
pub mod semantics;

use thiserror::Error;

/// Library-level error type.
#[derive(Debug, Error)]
pub enum PrepairError {
    /// A process counter exceeded `u64::MAX`.
    #[error("counter overflow")]
    CounterOverflow,
    /// Malformed or inconsistent input.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The requested analysis is not defined for this system class.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A configured iteration bound was exceeded.
    #[error("iteration limit exceeded ({0})")]
    IterationLimit(u64),
}
