//! Three broken ways to run goals concurrently, each ending with goals
//! exhausted while a rule still applies.
//!
//! `cargo run --example pitfalls --features pitfalls`

use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;
use chr_core::pitfalls::{run_pitfall, Pitfall};
use chr_core::syntax::parse_goals;
use chr_core::verify::check_final;

fn main() {
    let cases = [
        (Pitfall::StoreOnDrop, "store_on_drop", "A(1),B(2)"),
        (Pitfall::SplitStore, "split_store", "E,B,A,D"),
        (Pitfall::MultiStepBeforeJoin, "single_step", "A,B"),
    ];
    for (variant, name, goals) in cases {
        let example = corpus::get(name).unwrap();
        let p = example.program();
        let goals = parse_goals(goals).unwrap();
        println!("== {variant}: {}", p.to_string().trim_end().replace('\n', "  "));
        let r = run_pitfall(variant, &p, goals.clone());
        for line in &r.log {
            println!("  {line}");
        }
        println!("  {}", check_final(&r.state, &r.history, &p));
        let ok = run_concurrent(goals, &p, EngineConfig { workers: 2, ..EngineConfig::default() });
        println!("  shipped engine ends in {} ({})\n", ok.answer(), check_final(&ok.state, &ok.history, &p));
    }
}
