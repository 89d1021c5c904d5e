//! Checks a serialized trace: replay against the goal-based rules, finality,
//! projection onto abstract steps and the overlap audit. A tampered trace
//! is rejected.

use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;
use chr_core::verify::verify_trace_text;

fn main() {
    let example = corpus::get("merge").unwrap();
    let p = example.program();
    let goals = example.goals();
    let run = run_concurrent(goals.clone(), &p, EngineConfig { workers: 4, seed: 9, ..EngineConfig::default() });
    let text = run.trace.to_text();
    println!("{}", text.lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("... {} lines\n", text.lines().count());

    for v in verify_trace_text(&text, &goals, &p) {
        println!("{v}");
    }

    // Leave out the first simplification; later steps then use dead heads.
    let cut = text.lines().position(|l| l.contains(" simplify ")).unwrap();
    let forged: String = text
        .lines()
        .enumerate()
        .filter(|(i, _)| *i != cut)
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    println!("\nwithout line {}:", cut + 1);
    for v in verify_trace_text(&forged, &goals, &p) {
        println!("{v}");
    }
}
