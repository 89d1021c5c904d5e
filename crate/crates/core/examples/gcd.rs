//! Greatest common divisor on the sequential and concurrent engines.
//!
//! `cargo run --example gcd -- 12 18 30`

use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;
use chr_core::goal_engine::{run_sequential, SeqConfig};
use chr_core::term::{ChrConstraint, Constraint, Term};

fn main() {
    let numbers: Vec<i64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let numbers = if numbers.is_empty() { vec![3, 3, 9] } else { numbers };
    let goals: Vec<Constraint> = numbers.iter().map(|n| ChrConstraint::new("Gcd", vec![Term::int(*n)]).into()).collect();
    let p = corpus::get("gcd").unwrap().program();

    let seq = run_sequential(goals.clone(), &p, SeqConfig::default()).expect("no invariant checks requested");
    println!("sequential: {} in {} steps", seq.answer(), seq.trace.steps.len());

    for workers in [1, 2, 4] {
        let run = run_concurrent(goals.clone(), &p, EngineConfig { workers, seed: 1, ..EngineConfig::default() });
        println!("{workers} workers: {} in {} steps", run.answer(), run.trace.steps.len());
    }
}
