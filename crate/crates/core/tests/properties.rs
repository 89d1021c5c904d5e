mod common;

use std::collections::{BTreeSet, HashMap};

use chr_core::abstract_engine::{apply_instance, firings, rewrite_steps, run_random, AbstractStore, Tag};
use chr_core::concurrent::{run_concurrent, EngineConfig};
use chr_core::corpus;
use chr_core::goal_engine::{run_sequential, JoinPlan, Policy, SeqConfig, Status, TraceStep};
use chr_core::store::Store;
use chr_core::syntax::{parse_goals, parse_program, Program};
use chr_core::term::{
    entails, eval_ground, match_chr, mgu, ChrConstraint, Constraint, Equation, EvalError, Op, Term, Value, Var,
};
use chr_core::verify::{check_final, project_abstract, replay};
use common::{random_case, Shape};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn case(seed: u64, shape: Shape) -> (Program, Vec<Constraint>) {
    let g = random_case(&mut ChaCha8Rng::seed_from_u64(seed), shape);
    let p = parse_program(&g.program).unwrap_or_else(|e| panic!("{e}\n{}", g.program));
    let goals = parse_goals(&g.goals).unwrap_or_else(|e| panic!("{e}\n{}", g.goals));
    (p, goals)
}

fn with_vars() -> Shape {
    Shape {
        logical_vars: true,
        ..Shape::default()
    }
}

fn small_int() -> impl Strategy<Value = Term> {
    (-3i64..=3).prop_map(Term::int)
}

fn free_var() -> impl Strategy<Value = Term> {
    prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(Term::var)
}

fn open_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![small_int(), free_var(), prop::sample::select(vec!["u", "v"]).prop_map(Term::atom)];
    leaf.prop_recursive(2, 8, 2, |inner| {
        (prop::sample::select(vec![Op::Add, Op::Mul]), inner.clone(), inner)
            .prop_map(|(op, l, r)| Term::app(op, l, r))
    })
}

/// Ground integer expressions whose operands may be large.
fn ground_arith() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![(-5i64..=5).prop_map(Term::int), any::<i64>().prop_map(Term::int)];
    leaf.prop_recursive(4, 16, 2, |inner| {
        (prop::sample::select(vec![Op::Add, Op::Sub, Op::Mul]), inner.clone(), inner)
            .prop_map(|(op, l, r)| Term::app(op, l, r))
    })
}

/// Evaluation in 128 bits, failing when any intermediate leaves i64.
fn wide_eval(t: &Term) -> Option<i64> {
    match t {
        Term::Const(Value::Int(n)) => Some(*n),
        Term::App(op, l, r) => {
            let (a, b) = (wide_eval(l)? as i128, wide_eval(r)? as i128);
            let v = match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a.checked_mul(b)?,
                _ => unreachable!(),
            };
            i64::try_from(v).ok()
        }
        _ => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matching_is_sound(args in prop::collection::vec(open_term(), 1..4), mask in prop::collection::vec(any::<bool>(), 4)) {
        let cand = ChrConstraint::new("P", args.clone());
        // Pattern: some arguments replaced by rule variables, one repeated.
        let pat_args: Vec<Term> = args
            .iter()
            .enumerate()
            .map(|(i, a)| if mask[i] { Term::Var(Var::scoped(if i == 3 { "y0" } else { ["y0", "y1", "y2"][i] }, 0)) } else { a.clone() })
            .collect();
        let pattern = ChrConstraint::new("P", pat_args);
        if let Some(phi) = match_chr(&pattern, &cand, &Default::default()) {
            prop_assert_eq!(phi.apply_chr(&pattern), cand);
        }
    }

    #[test]
    fn mgu_is_idempotent(eqs in prop::collection::vec((open_term(), open_term()), 0..4), t in open_term()) {
        let eqs: Vec<Equation> = eqs.into_iter().map(|(l, r)| Equation::new(l, r)).collect();
        if let Ok(theta) = mgu(&eqs) {
            let once = theta.apply_term(&t);
            prop_assert_eq!(theta.apply_term(&once), once);
        }
    }

    #[test]
    fn entailment_survives_fresh_equations(
        binds in prop::collection::vec((prop::sample::select(vec!["a", "b", "c"]), -3i64..=3), 0..3),
        lhs in prop::sample::select(vec!["a", "b", "c"]),
        k in -3i64..=3,
        op in prop::sample::select(vec![Op::Lt, Op::Le, Op::Ne, Op::Eq]),
        fresh in prop::collection::vec((prop::sample::select(vec!["f1", "f2", "f3"]), prop_oneof![small_int(), free_var()]), 0..3),
    ) {
        let eqs: Vec<Equation> = binds.iter().map(|(v, n)| Equation::new(Term::var(v), Term::int(*n))).collect();
        let guard = Term::app(op, Term::Var(Var::scoped("g", 0)), Term::int(k));
        let phi = [(Var::scoped("g", 0), Term::var(lhs))].into_iter().collect();
        if let Ok(true) = entails(&eqs, &phi, &guard) {
            let mut more = eqs.clone();
            more.extend(fresh.iter().map(|(v, t)| Equation::new(Term::var(v), t.clone())));
            if mgu(&more).is_ok() {
                prop_assert_eq!(entails(&more, &phi, &guard), Ok(true));
            }
        }
    }

    #[test]
    fn ground_evaluation_is_total(t in ground_arith()) {
        match (t.eval(), wide_eval(&t)) {
            (Ok(Value::Int(n)), Some(m)) => prop_assert_eq!(n, m),
            (Err(EvalError::Overflow(_)), None) => {}
            (got, want) => prop_assert!(false, "{t}: got {got:?}, expected {want:?}"),
        }
        prop_assert_eq!(eval_ground(&t).is_ok(), wide_eval(&t).is_some());
    }
}

#[derive(Debug, Clone)]
enum StoreOp {
    Insert(&'static str, i64),
    Kill(usize),
}

fn store_ops() -> impl Strategy<Value = Vec<StoreOp>> {
    let op = prop_oneof![
        3 => (prop::sample::select(vec!["P", "Q", "R"]), 0i64..4).prop_map(|(p, n)| StoreOp::Insert(p, n)),
        1 => any::<usize>().prop_map(StoreOp::Kill),
    ];
    prop::collection::vec(op, 0..80)
}

fn build_store(ops: &[StoreOp]) -> Store {
    let mut s = Store::new();
    for op in ops {
        match op {
            StoreOp::Insert(p, n) => {
                s.insert(&ChrConstraint::new(p, vec![Term::int(*n)]));
            }
            StoreOp::Kill(i) => {
                let alive: Vec<u64> = s.alive().map(|(id, _)| id).collect();
                if !alive.is_empty() {
                    s.kill(&[alive[i % alive.len()]]).unwrap();
                }
            }
        }
    }
    s
}

fn multiset(cs: Vec<Constraint>) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for c in cs {
        *m.entry(c.to_string()).or_default() += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn index_finds_every_alive_constraint(ops in store_ops()) {
        let s = build_store(&ops);
        for (id, c) in s.alive() {
            let pattern = ChrConstraint::new(&c.pred, vec![Term::Var(Var::scoped("z", 0))]);
            prop_assert!(s.candidates(&pattern, &Default::default()).any(|(j, _)| j == id));
            let exact = ChrConstraint::new(&c.pred, c.args.clone());
            prop_assert!(s.candidates(&exact, &Default::default()).any(|(j, _)| j == id));
        }
    }

    #[test]
    fn kill_removes_exactly_the_killed(ops in store_ops(), pick in prop::collection::vec(any::<usize>(), 0..4)) {
        let mut s = build_store(&ops);
        let alive: Vec<(u64, ChrConstraint)> = s.alive().map(|(i, c)| (i, c.clone())).collect();
        if alive.is_empty() {
            return Ok(());
        }
        let mut ids: Vec<u64> = pick.iter().map(|i| alive[i % alive.len()].0).collect();
        ids.sort_unstable();
        ids.dedup();
        let mut expected = multiset(s.drop_ids());
        for id in &ids {
            let c = alive.iter().find(|(j, _)| j == id).unwrap().1.to_string();
            *expected.get_mut(&c).unwrap() -= 1;
        }
        expected.retain(|_, n| *n > 0);
        s.kill(&ids).unwrap();
        prop_assert_eq!(multiset(s.drop_ids()), expected);
        if let Some(first) = ids.first() {
            prop_assert!(s.kill(&[*first]).is_err());
        }
    }
}

const WAKE_PROGRAM: &str = "w1 @ P(x), Q(x) <=> R(x).\n\
                            w2 @ P(x), P(y) <=> x < y | R(y).\n\
                            w3 @ Q(x) <=> x == 2 | true.";

fn instance_keys(s: &Store, p: &Program) -> BTreeSet<(usize, Vec<Tag>)> {
    let view = AbstractStore::from_store(s, []);
    firings(&view, p)
        .into_iter()
        .map(|f| {
            let mut h = f.heads;
            h.sort_unstable();
            (f.rule, h)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wake_up_covers_enabled_instances(
        items in prop::collection::vec((prop::sample::select(vec!["P", "Q"]), prop_oneof![(0i64..3).prop_map(Term::int), free_var()]), 1..6),
        prior in prop::collection::vec((free_var(), prop_oneof![(0i64..3).prop_map(Term::int), free_var()]), 0..2),
        var in prop::sample::select(vec!["a", "b", "c", "d"]),
        rhs in prop_oneof![(0i64..3).prop_map(Term::int), free_var()],
    ) {
        let p = parse_program(WAKE_PROGRAM).unwrap();
        let mut s = Store::new();
        for (pred, arg) in &items {
            s.insert(&ChrConstraint::new(pred, vec![arg.clone()]));
        }
        for (l, r) in &prior {
            let _ = s.add_equation(&Equation::new(l.clone(), r.clone()));
        }
        if s.is_inconsistent() {
            return Ok(());
        }
        let e = Equation::new(Term::var(var), rhs);
        let before_forms: HashMap<u64, ChrConstraint> = s.alive().map(|(i, c)| (i, c.clone())).collect();
        let before = instance_keys(&s, &p);
        let predicted = s.wake_up(&e);
        let mut after_store = s.clone();
        let woken = match after_store.add_equation(&e) {
            Ok(w) => w,
            Err(_) => return Ok(()),
        };
        let woken_ids: BTreeSet<u64> = woken.iter().map(|w| w.id).collect();
        let predicted_ids: BTreeSet<u64> = predicted.woken.iter().map(|w| w.id).collect();
        prop_assert_eq!(&woken_ids, &predicted_ids);
        for (rule, ids) in instance_keys(&after_store, &p).difference(&before) {
            prop_assert!(ids.iter().any(|i| woken_ids.contains(i)), "new instance {rule} {ids:?} not woken");
            for i in ids {
                if after_store.current(*i) != before_forms.get(i) {
                    prop_assert!(woken_ids.contains(i));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn abstract_steps_replay_in_larger_stores(seed in any::<u64>(), extra in prop::collection::vec((0usize..3, 0i64..=5), 0..4)) {
        let (p, goals) = case(seed, Shape::default());
        let a = AbstractStore::new(goals.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Ok((_, fired)) = run_random(&a, &p, &mut rng, 500) else { return Ok(()) };
        let mut items: Vec<(Tag, Constraint)> = a.items().map(|(t, c)| (t, c.clone())).collect();
        let base = items.len() as Tag + 1000;
        for (i, (pred, n)) in extra.iter().enumerate() {
            items.push((base + i as Tag, ChrConstraint::new(common::PREDS[*pred], vec![Term::int(*n)]).into()));
        }
        let mut big = AbstractStore::from_tagged(items, []);
        let mut small = a;
        // Body constraints get different tags in the two stores.
        let mut rename: HashMap<Tag, Tag> = HashMap::new();
        for f in &fired {
            let mut g = f.clone();
            g.heads = f.heads.iter().map(|t| *rename.get(t).unwrap_or(t)).collect();
            let next_small = apply_instance(&small, &p, f).unwrap();
            let next_big = apply_instance(&big, &p, &g).ok_or_else(|| TestCaseError::fail(format!("{g:?} no longer applies")))?;
            let born = |old: &AbstractStore, new: &AbstractStore| -> Vec<Tag> {
                new.items().map(|(t, _)| t).filter(|t| old.get(*t).is_none()).collect()
            };
            for (s, b) in born(&small, &next_small).into_iter().zip(born(&big, &next_big)) {
                rename.insert(s, b);
            }
            small = next_small;
            big = next_big;
        }
    }

    #[test]
    fn rewrite_steps_are_deterministic(seed in any::<u64>()) {
        let (p, goals) = case(seed, Shape::default());
        let a = AbstractStore::new(goals);
        let rev = AbstractStore::from_tagged(a.items().map(|(t, c)| (t, c.clone())).collect::<Vec<_>>().into_iter().rev(), []);
        prop_assert_eq!(rewrite_steps(&a, &p), rewrite_steps(&rev, &p));
    }

    #[test]
    fn sequential_keeps_active_instances(seed in any::<u64>(), lifo in any::<bool>()) {
        let (p, goals) = case(seed, with_vars());
        let cfg = SeqConfig {
            policy: if lifo { Policy::Lifo } else { Policy::Fifo },
            check_invariants: true,
            ..SeqConfig::default()
        };
        let run = run_sequential(goals, &p, cfg);
        prop_assert!(run.is_ok(), "{}", run.unwrap_err());
    }

    #[test]
    fn inert_goals_do_not_change_the_answer(seed in any::<u64>(), inert in prop::collection::vec((0usize..10, 0i64..5), 1..4)) {
        let (p, goals) = case(seed, with_vars());
        let base = run_sequential(goals.clone(), &p, SeqConfig::default()).unwrap();
        let mut more = goals.clone();
        let mut added = Vec::new();
        for (at, n) in inert {
            let c: Constraint = ChrConstraint::new("Z", vec![Term::int(n)]).into();
            more.insert(at.min(more.len()), c.clone());
            added.push(c);
        }
        let run = run_sequential(more, &p, SeqConfig::default()).unwrap();
        let mut expected = base.answer().0;
        expected.extend(added);
        expected.sort();
        prop_assert_eq!(run.answer().0, expected);
    }

    #[test]
    fn sequential_traces_project_to_abstract_steps(seed in any::<u64>(), lifo in any::<bool>()) {
        let (p, goals) = case(seed, with_vars());
        let cfg = SeqConfig { policy: if lifo { Policy::Lifo } else { Policy::Fifo }, ..SeqConfig::default() };
        let run = run_sequential(goals.clone(), &p, cfg).unwrap();
        let v = project_abstract(&run.trace, &goals, &p);
        prop_assert!(v.passed, "{v}");
        prop_assert!(simplified_disjoint(&run.trace.steps));
    }

    #[test]
    fn join_plans_are_deterministic(seed in any::<u64>()) {
        let (p, _) = case(seed, Shape::default());
        let again = parse_program(&p.to_string()).unwrap();
        for (r, rule) in p.rules.iter().enumerate() {
            for pos in 0..rule.head_len() {
                let plan = JoinPlan::compile(&p, r, pos);
                prop_assert_eq!(&plan, &JoinPlan::compile(&p, r, pos));
                prop_assert_eq!(&plan, &JoinPlan::compile(&again, r, pos));
                let mut seen: Vec<usize> = plan.order.clone();
                seen.push(pos);
                seen.sort_unstable();
                prop_assert_eq!(seen, (0..rule.head_len()).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn concurrent_runs_are_linearizable(seed in any::<u64>(), workers in 1usize..=4) {
        let (p, goals) = case(seed, with_vars());
        let run = run_concurrent(goals.clone(), &p, EngineConfig { workers, seed, ..EngineConfig::default() });
        prop_assert_eq!(run.status(), Status::Done);
        let v = replay(&run.trace, &goals, &p);
        prop_assert!(v.passed, "{v}");
        let v = check_final(&run.state, &run.history, &p);
        prop_assert!(v.passed, "{v}");
        prop_assert!(simplified_disjoint(&run.trace.steps));
    }

    #[test]
    fn one_worker_dump_equals_sequential(seed in any::<u64>()) {
        let (p, goals) = case(seed, with_vars());
        let c = run_concurrent(goals.clone(), &p, EngineConfig { workers: 1, seed, ..EngineConfig::default() });
        let s = run_sequential(goals, &p, SeqConfig::default()).unwrap();
        prop_assert_eq!(c.dump(), s.dump());
    }

    #[test]
    fn sequential_output_is_reproducible(seed in any::<u64>()) {
        let (p, goals) = case(seed, with_vars());
        let a = run_sequential(goals.clone(), &p, SeqConfig::default()).unwrap();
        let b = run_sequential(goals, &p, SeqConfig::default()).unwrap();
        prop_assert_eq!(a.dump(), b.dump());
        prop_assert_eq!(a.trace.to_text(), b.trace.to_text());
    }
}

fn simplified_disjoint(steps: &[TraceStep]) -> bool {
    let mut seen = BTreeSet::new();
    steps.iter().flat_map(|s| s.delta.simplified.iter()).all(|id| seen.insert(*id))
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for e in corpus::all() {
        let p = e.program();
        let printed = p.to_string();
        let again = parse_program(&printed).unwrap();
        assert_eq!(again.to_string(), printed, "{}", e.name);
        assert_eq!(again.rules, p.rules, "{}", e.name);
    }
}

#[test]
fn rules_do_not_share_variables() {
    for e in corpus::all() {
        let p = e.program();
        for (i, a) in p.rules.iter().enumerate() {
            for b in &p.rules[i + 1..] {
                assert!(a.head_vars().is_disjoint(&b.head_vars()), "{}: {} and {}", e.name, a.name, b.name);
            }
        }
    }
}

#[test]
fn corpus_traces_project_to_abstract_steps() {
    for e in corpus::all() {
        let p = e.program();
        for policy in [Policy::Fifo, Policy::Lifo] {
            let cfg = SeqConfig { policy, check_invariants: true, ..SeqConfig::default() };
            let run = run_sequential(e.goals(), &p, cfg).unwrap();
            let v = project_abstract(&run.trace, &e.goals(), &p);
            assert!(v.passed, "{} {policy}: {v}", e.name);
        }
    }
}
