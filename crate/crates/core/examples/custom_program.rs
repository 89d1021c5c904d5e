//! Runs a program from a file or a built-in source on every engine.
//!
//! `cargo run --example custom_program -- path/to/prog.chr 'Goal(1), Goal(2)'`

use chr_core::abstract_engine::{run_random, AbstractStore};
use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus::goals_line;
use chr_core::goal_engine::{run_sequential, Policy, SeqConfig};
use chr_core::syntax::{parse_goals, parse_program};
use rand::SeedableRng;

const FALLBACK: &str = "% goals: Max(4), Max(9), Max(2), Max(7)
max @ Max(x) \\ Max(y) <=> x >= y | true.
";

fn main() {
    let mut args = std::env::args().skip(1);
    let source = match args.next() {
        Some(path) => std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}")),
        None => FALLBACK.to_string(),
    };
    let p = parse_program(&source).unwrap_or_else(|e| panic!("{e}"));
    let goals_text = args.next().unwrap_or_else(|| goals_line(&source).unwrap_or("").to_string());
    let goals = parse_goals(&goals_text).unwrap_or_else(|e| panic!("goals: {e}"));

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let (s, fired) = run_random(&AbstractStore::new(goals.clone()), &p, &mut rng, 100_000).unwrap();
    println!("abstract    {} after {} firings", s.answer(), fired.len());
    for policy in [Policy::Fifo, Policy::Lifo] {
        let run = run_sequential(goals.clone(), &p, SeqConfig { policy, ..SeqConfig::default() }).unwrap();
        println!("{policy:<11} {} ({})", run.answer(), run.status());
    }
    let run = run_concurrent(goals, &p, EngineConfig { workers: 4, ..EngineConfig::default() });
    println!("concurrent  {} ({})", run.answer(), run.status());
}
