//! Command-line front end for the `prepair` library.
//!
//! Exit codes: 0 = safe / repaired, 1 = unsafe / deadlock / unrealizable,
//! 2 = input error, 3 = unsupported input.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use prepair::core::SystemKind;
use prepair::deadlock::{detect_deadlock, pr_overapprox, DeadlockOutcome};
use prepair::frontend::{parse_problem, Problem};
use prepair::mc::{max_safe_size, model_check, reachable_error_sequence, MaxSafeSize};
use prepair::repair::{repair, Mode, RepairOptions, RepairVerdict};
use prepair::sat::parse_prefer;
use prepair::semantics::{initial_config, successors};
use prepair::PrepairError;

#[derive(Parser)]
#[command(name = "prepair", version, about = "Parameterized verification and repair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Full,
    Single,
    Naive,
}

#[derive(Subcommand)]
enum Command {
    /// Model check a system against its error configurations.
    Check {
        file: PathBuf,
        /// Also report the maximal safe instance size when unsafe.
        #[arg(long)]
        max_safe: bool,
    },
    /// Detect parameterized deadlocks (exact for disjunctive systems,
    /// one-sided via guard overapproximation for rendezvous systems).
    Deadlock { file: PathBuf },
    /// Repair the system by removing transitions until it is safe.
    Repair {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        mode: CliMode,
        /// Skip the deadlock check between model-check rounds.
        #[arg(long)]
        no_deadlock_check: bool,
        /// Bound on model-check calls.
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        /// Preference file with `try <id>...` candidate removal sets.
        #[arg(long)]
        prefer: Option<PathBuf>,
        /// Write each iteration's SAT query in DIMACS format to this directory.
        #[arg(long)]
        emit_dimacs: Option<PathBuf>,
        /// Print the accumulated constraints after each iteration.
        #[arg(long)]
        emit_constraints: bool,
        /// Cross-check the repaired system with explicit-state search up to
        /// this many processes.
        #[arg(long)]
        cross_check: Option<u64>,
        /// Write the full machine-readable report as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a pseudo-random simulation of a fixed-size instance.
    Simulate {
        file: PathBuf,
        /// Number of anonymous B-processes.
        #[arg(long)]
        n: u64,
        /// Number of steps to take.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let unsupported = e
                .downcast_ref::<PrepairError>()
                .is_some_and(|p| matches!(p, PrepairError::Unsupported(_)));
            ExitCode::from(if unsupported { 3 } else { 2 })
        }
    }
}

fn load(path: &Path) -> anyhow::Result<Problem> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(parse_problem(&text)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Check { file, max_safe } => {
            let p = load(&file)?;
            let outcome = model_check(&p.system, &p.errors)?;
            println!(
                "system '{}' ({}): {} after {} backward iterations",
                p.system.name,
                p.system.kind,
                if outcome.safe { "SAFE" } else { "UNSAFE" },
                outcome.iterations
            );
            for (k, set) in outcome.reported.iter().enumerate() {
                println!("  E_{k} minimal elements ({} new):", set.len());
                for c in set {
                    println!("    {}", c.render(&p.system));
                }
            }
            if outcome.safe {
                return Ok(ExitCode::SUCCESS);
            }
            for w in &outcome.witnesses {
                println!("  initial error witness: {}", w.render(&p.system));
            }
            let seq = reachable_error_sequence(&p.system, &outcome)?;
            println!("  concrete error path (one configuration per step):");
            for set in &seq.sets {
                let c = set.iter().next().expect("nonempty error set");
                println!("    {}", c.render(&p.system));
            }
            if max_safe {
                match max_safe_size(&p.system, &p.errors)? {
                    MaxSafeSize::SafeForAll => println!("  safe for every instance size"),
                    MaxSafeSize::Bounded { min_error_size } => println!(
                        "  maximal safe size: {} processes (errors from {})",
                        min_error_size - 1,
                        min_error_size
                    ),
                }
            }
            Ok(ExitCode::FAILURE)
        }
        Command::Deadlock { file } => {
            let p = load(&file)?;
            let (sys, approx) = match p.system.kind {
                SystemKind::Disjunctive => (p.system.clone(), false),
                SystemKind::Rendezvous => (pr_overapprox(&p.system)?.0, true),
                SystemKind::Broadcast => {
                    return Err(PrepairError::Unsupported(
                        "deadlock detection is not supported for broadcast systems".into(),
                    )
                    .into())
                }
            };
            match detect_deadlock(&sys)? {
                DeadlockOutcome::NoDeadlock { iterations, capped } => {
                    println!(
                        "system '{}': NO DEADLOCK ({} backward iterations{})",
                        p.system.name,
                        iterations,
                        if capped { ", iteration cap reached" } else { "" }
                    );
                    Ok(ExitCode::SUCCESS)
                }
                DeadlockOutcome::Deadlock { witnesses, iterations } => {
                    println!(
                        "system '{}': DEADLOCK{} ({} backward iterations)",
                        p.system.name,
                        if approx { " (overapproximate semantics)" } else { "" },
                        iterations
                    );
                    for w in &witnesses {
                        println!(
                            "  from {} reaching deadlocked {}",
                            w.initial.render(&sys),
                            w.deadlocked.render(&sys)
                        );
                    }
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Repair {
            file,
            mode,
            no_deadlock_check,
            max_iter,
            prefer,
            emit_dimacs,
            emit_constraints,
            cross_check,
            json,
        } => {
            let p = load(&file)?;
            let ids = p.system.delta.ids();
            let prefer = match prefer {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("cannot read {}", path.display()))?;
                    parse_prefer(&text, &ids)?
                }
                None => Vec::new(),
            };
            let opts = RepairOptions {
                mode: match mode {
                    CliMode::Full => Mode::Full,
                    CliMode::Single => Mode::SinglePath,
                    CliMode::Naive => Mode::Naive,
                },
                check_deadlock: !no_deadlock_check,
                max_iter,
                prefer,
            };
            let report = repair(&p.system, &p.errors, &p.init_constr(), &opts)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for rec in &report.history {
                println!(
                    "iteration {}: {}{}",
                    rec.index,
                    if rec.safe { "safe" } else { "unsafe" },
                    match rec.deadlock_found {
                        Some(true) => ", deadlock",
                        Some(false) => ", deadlock-free",
                        None => "",
                    }
                );
                if emit_constraints {
                    if let Some(c) = &rec.new_constr {
                        println!("  new constraint: {c}");
                    }
                }
                if let Some(dir) = &emit_dimacs {
                    if let Some(d) = &rec.dimacs {
                        std::fs::create_dir_all(dir)?;
                        let path = dir.join(format!("iter{:03}.cnf", rec.index));
                        std::fs::write(&path, d)?;
                        println!("  wrote {}", path.display());
                    }
                }
                if let Some(removed) = &rec.removed_after {
                    println!("  next candidate removes: {{{}}}", removed.join(", "));
                }
            }
            if let Some(path) = &json {
                std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
            }
            match &report.verdict {
                RepairVerdict::Repaired { removed, .. } => {
                    println!(
                        "REPAIRED after {} model-check calls; removed {{{}}}",
                        report.model_check_calls,
                        removed.join(", ")
                    );
                    if let Some(bound) = cross_check {
                        let kept: BTreeSet<usize> = match &report.verdict {
                            RepairVerdict::Repaired { kept, .. } => kept
                                .iter()
                                .map(|id| ids.iter().position(|x| x == id).expect("known id"))
                                .collect(),
                            RepairVerdict::Unrealizable => unreachable!(),
                        };
                        let (fixed, _) = prepair::repair::restrict(&p.system, &kept);
                        for n in 0..=bound {
                            match prepair::oracle::explicit_reach(&fixed, n, &p.errors)? {
                                None => println!("  cross-check n={n}: no reachable error"),
                                Some(c) => {
                                    println!(
                                        "  cross-check n={n}: ERROR REACHABLE at {}",
                                        c.render(&fixed)
                                    );
                                    return Ok(ExitCode::FAILURE);
                                }
                            }
                        }
                    }
                    Ok(ExitCode::SUCCESS)
                }
                RepairVerdict::Unrealizable => {
                    println!(
                        "UNREALIZABLE after {} model-check calls (constraints unsatisfiable)",
                        report.model_check_calls
                    );
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Simulate { file, n, steps, seed } => {
            let p = load(&file)?;
            let mut cfg = initial_config(&p.system, n);
            let mut rng = seed.wrapping_mul(2).wrapping_add(1);
            println!("step 0: {}", cfg.render(&p.system));
            for step in 1..=steps {
                let succs = successors(&p.system, &cfg)?;
                if succs.is_empty() {
                    println!("step {step}: no enabled transition, stopping");
                    break;
                }
                // xorshift64*, deterministic across platforms
                rng ^= rng >> 12;
                rng ^= rng << 25;
                rng ^= rng >> 27;
                let pick = (rng.wrapping_mul(0x2545F4914F6CDD1D) >> 32) as usize % succs.len();
                let chosen = &succs[pick];
                let fired: Vec<&str> =
                    chosen.fired.iter().map(|a| p.system.delta.ids()[*a]).collect();
                cfg = chosen.target.clone();
                println!("step {step}: {} [{}]", cfg.render(&p.system), fired.join(", "));
                if p.errors.covers(&cfg) {
                    println!("step {step}: reached an error configuration");
                    return Ok(ExitCode::FAILURE);
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
