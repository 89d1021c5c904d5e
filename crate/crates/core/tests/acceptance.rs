//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use chr_core::abstract_engine::{final_stores, run_random, AbstractStore, Answer, LimitExceeded, Limits};
use chr_core::concurrent::{overlapping_firings, run_concurrent, EngineConfig};
use chr_core::corpus::{self, Example};
use chr_core::goal_engine::{run_sequential, Policy, Run, SeqConfig, Status, Trace};
use chr_core::pitfalls::{run_pitfall, Pitfall};
use chr_core::syntax::{parse_goals, parse_program, Program};
use chr_core::term::{ChrConstraint, Constraint, Term};
use chr_core::verify::{audit_overlap, check_final, replay};
use common::{random_case, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Running totals for the checks applied to every run of criteria 1 to 4.
#[derive(Default)]
struct Tally {
    replayed: usize,
    replay_failures: Vec<String>,
    finals: usize,
    final_failures: Vec<String>,
    audited: usize,
    audit_failures: Vec<String>,
}

impl Tally {
    /// Verifies a run through its serialized trace.
    fn check(&mut self, label: &str, run: &Run, goals: &[Constraint], p: &Program) {
        let text = run.trace.to_text();
        let trace = match Trace::parse(&text, p) {
            Ok(t) => t,
            Err(e) => {
                self.replayed += 1;
                self.replay_failures.push(format!("{label}: {e}"));
                return;
            }
        };
        self.replayed += 1;
        let v = replay(&trace, goals, p);
        if !v.passed {
            self.replay_failures.push(format!("{label}: {v}"));
        }
        if run.status() == Status::Done {
            self.finals += 1;
            let v = check_final(&run.state, &run.history, p);
            if !v.passed {
                self.final_failures.push(format!("{label}: {v}"));
            }
        }
        if trace.engine == "concurrent" {
            self.audited += 1;
            let v = audit_overlap(&trace);
            if !v.passed {
                self.audit_failures.push(format!("{label}: {v}"));
            }
        }
    }
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, n: u32, name: &str, ok: bool, detail: impl AsRef<str>) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {n:>2} {name}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    }
}

fn first(errors: &[String]) -> String {
    errors.first().cloned().unwrap_or_default()
}

fn seq(policy: Policy) -> SeqConfig {
    SeqConfig {
        policy,
        ..SeqConfig::default()
    }
}

fn conc(workers: usize, seed: u64) -> EngineConfig {
    EngineConfig {
        workers,
        seed,
        ..EngineConfig::default()
    }
}

fn gcd(tally: &mut Tally) -> (bool, String) {
    let e = corpus::get("gcd").unwrap();
    let p = e.program();
    let goals = e.goals();
    let want = "{Gcd(3)}";
    let mut bad = Vec::new();
    let mut runs = 0;
    let mut spent = Duration::ZERO;
    for seed in 0..100 {
        let t = Instant::now();
        let r = run_sequential(goals.clone(), &p, seq(Policy::Fifo)).unwrap();
        spent += t.elapsed();
        runs += 1;
        if r.answer().to_string() != want {
            bad.push(format!("sequential: {}", r.answer()));
        }
        tally.check("gcd sequential", &r, &goals, &p);
        for workers in [1, 2, 4, 8] {
            let t = Instant::now();
            let r = run_concurrent(goals.clone(), &p, conc(workers, seed));
            spent += t.elapsed();
            runs += 1;
            if r.answer().to_string() != want {
                bad.push(format!("workers={workers} seed={seed}: {}", r.answer()));
            }
            tally.check(&format!("gcd workers={workers} seed={seed}"), &r, &goals, &p);
        }
    }
    let ok = bad.is_empty() && spent < Duration::from_secs(5);
    (ok, format!("{runs} runs, {} wrong, {:.2}s {}", bad.len(), spent.as_secs_f64(), first(&bad)))
}

fn channel(tally: &mut Tally) -> (bool, String) {
    let e = corpus::get("get").unwrap();
    let p = e.program();
    let goals = e.goals();
    let oracle = final_stores(&AbstractStore::new(goals.clone()), &p, Limits::default()).unwrap();
    let shown: Vec<String> = oracle.iter().map(Answer::to_string).collect();
    let expected = ["{m=1, n=8}", "{m=8, n=1}"];
    let mut ok = shown == expected;
    let mut seen = BTreeSet::new();
    for seed in 0..200 {
        let r = run_concurrent(goals.clone(), &p, conc(4, seed));
        let a = r.answer();
        if !oracle.contains(&a) {
            ok = false;
        }
        seen.insert(a.to_string());
        tally.check(&format!("channel seed={seed}"), &r, &goals, &p);
    }
    (ok, format!("oracle {shown:?}, 200 concurrent runs reached {seen:?}"))
}

/// One `Merge(4,1)` and the chain `Leq(1,2)` .. `Leq(7,8)`.
fn sorted_chain(a: &Answer) -> bool {
    let c = |pred: &str, x: i64, y: i64| Constraint::Chr(ChrConstraint::new(pred, vec![Term::int(x), Term::int(y)]));
    let mut want: Vec<Constraint> = (1..8).map(|i| c("Leq", i, i + 1)).collect();
    want.push(c("Merge", 4, 1));
    want.sort();
    a.0 == want
}

fn merge_sort(tally: &mut Tally) -> (bool, String) {
    let e = corpus::get("merge").unwrap();
    let p = e.program();
    let goals = e.goals();
    let mut bad = Vec::new();
    let mut runs = 0;
    let mut spent = Duration::ZERO;
    let t = Instant::now();
    for seed in 0..50 {
        let start = AbstractStore::new(goals.clone());
        let (s, _) = run_random(&start, &p, &mut ChaCha8Rng::seed_from_u64(seed), 10_000).unwrap();
        runs += 1;
        if !sorted_chain(&s.answer()) {
            bad.push(format!("abstract seed={seed}: {}", s.answer()));
        }
    }
    spent += t.elapsed();
    for policy in [Policy::Fifo, Policy::Lifo] {
        for _ in 0..50 {
            let t = Instant::now();
            let r = run_sequential(goals.clone(), &p, seq(policy)).unwrap();
            spent += t.elapsed();
            runs += 1;
            if !sorted_chain(&r.answer()) {
                bad.push(format!("sequential {policy}: {}", r.answer()));
            }
            tally.check("merge sequential", &r, &goals, &p);
        }
    }
    for workers in [1, 2, 4, 8] {
        for seed in 0..50 {
            let t = Instant::now();
            let r = run_concurrent(goals.clone(), &p, conc(workers, seed));
            spent += t.elapsed();
            runs += 1;
            if !sorted_chain(&r.answer()) {
                bad.push(format!("workers={workers} seed={seed}: {}", r.answer()));
            }
            tally.check(&format!("merge workers={workers} seed={seed}"), &r, &goals, &p);
        }
    }
    let ok = bad.is_empty() && spent < Duration::from_secs(10);
    (ok, format!("{runs} runs, {} wrong, {:.2}s {}", bad.len(), spent.as_secs_f64(), first(&bad)))
}

fn fuzz(tally: &mut Tally) -> (bool, String) {
    const CASES: u64 = 500;
    let mut skipped = 0;
    let mut fired = 0;
    let mut ambiguous = 0;
    let mut bad = Vec::new();
    for i in 0..CASES {
        let g = random_case(&mut ChaCha8Rng::seed_from_u64(i), Shape::default());
        let p = parse_program(&g.program).unwrap();
        let goals = parse_goals(&g.goals).unwrap();
        let workers = 1 + (i as usize % 4);
        let r = run_concurrent(goals.clone(), &p, conc(workers, i));
        tally.check(&format!("fuzz case {i}"), &r, &goals, &p);
        fired += usize::from(r.trace.steps.iter().any(|s| s.kind.is_firing()));
        let limits = Limits {
            max_states: 20_000,
            ..Limits::default()
        };
        match final_stores(&AbstractStore::new(goals.clone()), &p, limits) {
            Ok(answers) => {
                ambiguous += usize::from(answers.len() > 1);
                if !answers.contains(&r.answer()) {
                    bad.push(format!("case {i}: {} not among {} oracle stores\n{}\ngoals: {}", r.answer(), answers.len(), g.program, g.goals));
                }
            }
            Err(LimitExceeded::States(_) | LimitExceeded::Depth(_) | LimitExceeded::Steps(_)) => skipped += 1,
        }
    }
    let rate = skipped as f64 / CASES as f64;
    let ok = bad.is_empty() && rate < 0.05;
    (
        ok,
        format!(
            "{CASES} programs ({fired} fire a rule, {ambiguous} with several final stores), {} mismatches, {skipped} skipped ({:.1}%) {}",
            bad.len(),
            rate * 100.0,
            first(&bad)
        ),
    )
}

/// Seed search for two committed firings with overlapping intervals.
fn find_overlap(e: &Example) -> Option<(usize, u64)> {
    let p = e.program();
    for workers in [2, 4, 8] {
        for seed in 0..300 {
            let r = run_concurrent(e.goals(), &p, conc(workers, seed));
            if !overlapping_firings(&r.trace.steps).is_empty() {
                return Some((workers, seed));
            }
        }
    }
    None
}

fn overlap_audit(tally: &Tally) -> (bool, String) {
    let mut missing = Vec::new();
    let mut found = Vec::new();
    for e in corpus::all() {
        match find_overlap(e) {
            Some((w, s)) => found.push(format!("{}@w{w}s{s}", e.name)),
            None => missing.push(e.name),
        }
    }
    let ok = tally.audit_failures.is_empty() && missing.is_empty();
    (
        ok,
        format!(
            "{} concurrent traces audited, {} failed {}; overlapping firings found for {}/{} programs, none for {missing:?}",
            tally.audited,
            tally.audit_failures.len(),
            first(&tally.audit_failures),
            found.len(),
            corpus::all().len(),
        ),
    )
}

fn active_instances() -> (bool, String) {
    let mut bad = Vec::new();
    let mut runs = 0;
    for e in corpus::all().iter().chain([&corpus::EMPTY]) {
        for policy in [Policy::Fifo, Policy::Lifo] {
            let cfg = SeqConfig {
                policy,
                check_invariants: true,
                ..SeqConfig::default()
            };
            runs += 1;
            if let Err(b) = run_sequential(e.goals(), &e.program(), cfg) {
                bad.push(format!("{} {policy}: {b}", e.name));
            }
        }
    }
    (bad.is_empty(), format!("{runs} checked runs, {} breaches {}", bad.len(), first(&bad)))
}

fn negative_controls() -> (bool, String) {
    let cases = [
        (Pitfall::StoreOnDrop, "store_on_drop", "A(1),B(2)", "A(1)#1\nB(2)#2\n"),
        (Pitfall::SplitStore, "split_store", "E,B,A,D", "E#1\nB#2\nA#3\nD#4\n"),
        (Pitfall::MultiStepBeforeJoin, "single_step", "A,B", "A#1\nB#2\n"),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (variant, name, goals, stuck) in cases {
        let p = corpus::get(name).unwrap().program();
        let goals = parse_goals(goals).unwrap();
        let r = run_pitfall(variant, &p, goals.clone());
        let rejected = !check_final(&r.state, &r.history, &p).passed;
        let reproduced = r.state.goals.is_empty() && r.state.store.dump() == stuck;
        let sound = run_concurrent(goals, &p, conc(2, 0));
        let shipped_ok = check_final(&sound.state, &sound.history, &p).passed;
        ok &= rejected && reproduced && shipped_ok;
        notes.push(format!(
            "{variant}: stuck at {{{}}} {}",
            r.state.store.dump().trim_end().replace('\n', ","),
            if rejected { "rejected" } else { "NOT rejected" }
        ));
    }
    (ok, notes.join("; "))
}

fn one_worker_equivalence() -> (bool, String) {
    let mut bad = Vec::new();
    let examples: Vec<&Example> = corpus::all().iter().chain([&corpus::EMPTY]).collect();
    for e in &examples {
        let p = e.program();
        let s = run_sequential(e.goals(), &p, seq(Policy::Fifo)).unwrap();
        for seed in 0..5 {
            let c = run_concurrent(e.goals(), &p, conc(1, seed));
            if c.dump() != s.dump() {
                bad.push(format!("{} seed={seed}", e.name));
            }
        }
    }
    (bad.is_empty(), format!("{} programs, {} mismatches {}", examples.len(), bad.len(), first(&bad)))
}

fn scalability() -> String {
    let p = corpus::get("gcd").unwrap().program();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let goals: Vec<Constraint> = (0..10_000)
        .map(|_| ChrConstraint::new("Gcd", vec![Term::int(rand::Rng::gen_range(&mut rng, 1..=60) * 6)]).into())
        .collect();
    let mut times = Vec::new();
    for workers in [1, 8] {
        let t = Instant::now();
        let r = run_concurrent(goals.clone(), &p, conc(workers, 1));
        let secs = t.elapsed().as_secs_f64();
        times.push(format!("workers={workers} {secs:.2}s -> {}", r.answer()));
    }
    format!(
        "{} ({} cpu)",
        times.join(", "),
        std::thread::available_parallelism().map_or(1, |n| n.get())
    )
}

fn main() {
    let mut report = Report { failed: 0 };
    let mut tally = Tally::default();

    let (ok, d) = gcd(&mut tally);
    report.line(1, "gcd", ok, d);
    let (ok, d) = channel(&mut tally);
    report.line(2, "channel", ok, d);
    let (ok, d) = merge_sort(&mut tally);
    report.line(3, "merge sort", ok, d);
    let (ok, d) = fuzz(&mut tally);
    report.line(4, "oracle fuzzing", ok, d);
    report.line(
        5,
        "trace replay",
        tally.replay_failures.is_empty() && tally.replayed > 0,
        format!("{} traces, {} failed {}", tally.replayed, tally.replay_failures.len(), first(&tally.replay_failures)),
    );
    report.line(
        6,
        "final states",
        tally.final_failures.is_empty() && tally.finals > 0,
        format!("{} done runs, {} not final {}", tally.finals, tally.final_failures.len(), first(&tally.final_failures)),
    );
    let (ok, d) = overlap_audit(&tally);
    report.line(7, "overlap audit", ok, d);
    let (ok, d) = active_instances();
    report.line(8, "active instances", ok, d);
    let (ok, d) = negative_controls();
    report.line(9, "negative controls", ok, d);
    let (ok, d) = one_worker_equivalence();
    report.line(10, "one worker", ok, d);
    println!("INFO scalability: {}", scalability());

    if report.failed > 0 {
        println!("{} criteria failed", report.failed);
        std::process::exit(1);
    }
}
