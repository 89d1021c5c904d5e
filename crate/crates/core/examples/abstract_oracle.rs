//! Exhaustive exploration of the rewriting semantics.
//!
//! `cargo run --example abstract_oracle -- 'r @ A(x), A(y) <=> x < y | A(y - x).' 'A(4), A(6), A(9)'`

use chr_core::abstract_engine::{final_stores, rewrite_steps, AbstractStore, Limits};
use chr_core::syntax::{parse_goals, parse_program};

fn main() {
    let mut args = std::env::args().skip(1);
    let src = args.next().unwrap_or_else(|| "get @ Get(x), Put(y) <=> x = y.".into());
    let goals = args.next().unwrap_or_else(|| "Get(m), Put(1), Get(n), Put(8)".into());
    let p = parse_program(&src).unwrap_or_else(|e| panic!("program: {e}"));
    let start = AbstractStore::new(parse_goals(&goals).unwrap_or_else(|e| panic!("goals: {e}")));

    println!("first steps from {}:", start.answer());
    for step in rewrite_steps(&start, &p) {
        println!("  {} on {:?} -> {}", p.rules[step.firing.rule].name, step.firing.heads, step.result.answer());
    }
    match final_stores(&start, &p, Limits::default()) {
        Ok(answers) => {
            println!("{} final stores:", answers.len());
            for a in answers {
                println!("  {a}");
            }
        }
        Err(e) => println!("gave up: {e}"),
    }
}
