//! Merge sort written as two rules.
//!
//! `cargo run --example merge_sort -- 5 2 8 1 7 3 6 4`

use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;
use chr_core::term::{ChrConstraint, Constraint, Term, Value};

fn main() {
    let mut items: Vec<i64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    if items.is_empty() {
        items = vec![5, 2, 8, 1, 7, 3, 6, 4];
    }
    let goals: Vec<Constraint> = items
        .iter()
        .map(|n| ChrConstraint::new("Merge", vec![Term::int(1), Term::int(*n)]).into())
        .collect();
    let p = corpus::get("merge").unwrap().program();
    let run = run_concurrent(goals, &p, EngineConfig { workers: 4, seed: 3, ..EngineConfig::default() });
    print!("final store:\n{}", run.dump());

    // Follow the Leq links from the smallest element.
    let int = |t: &Term| match t {
        Term::Const(Value::Int(n)) => *n,
        _ => panic!("ground integers expected"),
    };
    let links: Vec<(i64, i64)> = run
        .state
        .store
        .alive()
        .filter(|(_, c)| &*c.pred == "Leq")
        .map(|(_, c)| (int(&c.args[0]), int(&c.args[1])))
        .collect();
    let mut at = *items.iter().min().unwrap();
    let mut sorted = vec![at];
    while let Some((_, next)) = links.iter().find(|(a, _)| *a == at) {
        sorted.push(*next);
        at = *next;
    }
    println!("sorted: {sorted:?}");
}
