//! Equations wake the constraints whose normal form they change.

use chr_core::store::Store;
use chr_core::syntax::{parse_constraint, parse_goals, parse_program};
use chr_core::goal_engine::{run_sequential, SeqConfig};
use chr_core::term::Constraint;

fn main() {
    let mut store = Store::new();
    for c in parse_goals("A(a), B(2), A(b), B(c)").unwrap() {
        if let Constraint::Chr(c) = c {
            store.insert(&c);
        }
    }
    for eq in ["a = 2", "c = b", "b = 3"] {
        let Constraint::Eq(e) = parse_constraint(eq).unwrap() else { unreachable!() };
        let woken = store.add_equation(&e).unwrap();
        let ids: Vec<String> = woken.iter().map(ToString::to_string).collect();
        println!("{eq:<6} wakes [{}]", ids.join(", "));
    }

    let example = chr_core::corpus::get("wakeup").unwrap();
    let p = parse_program(example.source).unwrap();
    let run = run_sequential(example.goals(), &p, SeqConfig::default()).unwrap();
    println!("\n{}", example.goals_text());
    print!("ends in\n{}", run.dump());
}
