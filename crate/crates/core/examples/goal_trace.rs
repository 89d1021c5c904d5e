//! Step-by-step goal-based execution of the channel example.
//!
//! Prints every Solve, Activate, Simplify, Propagate and Drop step with the
//! goals and store after it.

use chr_core::goal_engine::{Policy, Sequential};
use chr_core::syntax::{parse_goals, parse_program};

fn main() {
    let p = parse_program("get @ Get(x), Put(y) <=> x = y.").unwrap();
    let goals = parse_goals("Get(x1), Get(x2), Put(1), Put(2)").unwrap();
    let mut engine = Sequential::new(&p, goals, Policy::Fifo);
    while let Some(step) = engine.step() {
        let rule = step.rule.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
        println!("{:>2} {:<9}{rule} on {}  delta {}", step.seq, step.kind.to_string(), step.goal, step.delta);
    }
    let run = engine.run(Default::default()).unwrap();
    print!("final store:\n{}", run.dump());
}
