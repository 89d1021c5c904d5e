//! An unbuffered channel: two receivers, two senders.
//!
//! The abstract oracle lists every reachable answer; repeated concurrent runs
//! show which of them the scheduler actually hits.

use std::collections::BTreeMap;

use chr_core::abstract_engine::{final_stores, AbstractStore, Limits};
use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;

fn main() {
    let example = corpus::get("get").unwrap();
    let p = example.program();
    let goals = example.goals();
    println!("program: {}", p.to_string().trim_end());
    println!("goals:   {}", example.goals_text());

    let answers = final_stores(&AbstractStore::new(goals.clone()), &p, Limits::default()).unwrap();
    println!("\nreachable answers:");
    for a in &answers {
        println!("  {a}");
    }

    let mut seen = BTreeMap::new();
    for seed in 0..100 {
        let run = run_concurrent(goals.clone(), &p, EngineConfig { workers: 4, seed, ..EngineConfig::default() });
        *seen.entry(run.answer().to_string()).or_insert(0) += 1;
    }
    println!("\n100 runs on 4 workers:");
    for (a, n) in seen {
        println!("  {a} x{n}");
    }
}
