//! Looks for time-overlapping rule firings in concurrent runs and groups
//! each run into sets of overlapping steps whose side effects compose.
//!
//! `cargo run --example concurrent_audit -- merge`

use chr_core::concurrent::{decompose_k, overlapping_firings, run_counting, EngineConfig};
use chr_core::corpus;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "gcd".into());
    let example = corpus::get(&name).unwrap_or_else(|| panic!("no bundled program named {name}"));
    let p = example.program();
    for seed in 0..200 {
        let cfg = EngineConfig { workers: 4, seed, ..EngineConfig::default() };
        let (run, aborts) = run_counting(example.goals(), &p, cfg);
        let pairs = overlapping_firings(&run.trace.steps);
        if pairs.is_empty() {
            continue;
        }
        println!("seed {seed}: {} steps, {aborts} aborted commits", run.trace.steps.len());
        for (a, b) in &pairs {
            let show = |seq: u64| {
                let s = &run.trace.steps[seq as usize - 1];
                format!("{seq} {} {} {}", s.kind, s.rule.as_deref().unwrap_or(""), s.delta)
            };
            println!("  overlapping: [{}] and [{}]", show(*a), show(*b));
        }
        let groups = decompose_k(&run.trace.steps).expect("side effects of overlapping steps are disjoint");
        for g in groups.iter().filter(|g| g.seqs.len() > 1) {
            println!("  group {:?} composes to {}", g.seqs, g.delta);
        }
        print!("final store:\n{}", run.dump());
        return;
    }
    println!("no overlapping firings in 200 seeds");
}
