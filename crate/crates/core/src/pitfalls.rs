//! Broken two-worker executors, kept as negative controls.
//!
//! Each variant violates one requirement of sound concurrent execution and
//! can stop in a state with no goals whose store still admits a rule
//! firing. Workers run in lockstep rounds so that outcomes are
//! deterministic.

use std::collections::VecDeque;
use std::fmt;

use crate::goal_engine::{plan_effect, Matcher, PropHistory};
use crate::store::{Goal, Id, NumberedConstraint, State, Store};
use crate::syntax::Program;
use crate::term::Constraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pitfall {
    /// Activation numbers a goal but stores it only when it is dropped.
    StoreOnDrop,
    /// Each worker owns half of the store.
    SplitStore,
    /// Workers run a goal to completion on a private copy before joining.
    MultiStepBeforeJoin,
}

impl Pitfall {
    pub const ALL: [Pitfall; 3] = [Pitfall::StoreOnDrop, Pitfall::SplitStore, Pitfall::MultiStepBeforeJoin];
}

impl fmt::Display for Pitfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pitfall::StoreOnDrop => "store-on-drop",
            Pitfall::SplitStore => "split-store",
            Pitfall::MultiStepBeforeJoin => "multi-step-before-join",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PitfallRun {
    pub state: State,
    pub history: PropHistory,
    /// One line per worker action.
    pub log: Vec<String>,
}

const WORKERS: usize = 2;
const MAX_ROUNDS: usize = 10_000;

struct Ctx<'p> {
    p: &'p Program,
    matcher: Matcher,
    history: PropHistory,
    next: Id,
    log: Vec<String>,
}

/// Result of one goal step on some store.
#[derive(Default)]
struct Out {
    fired: bool,
    front: Option<Goal>,
    back: Vec<Goal>,
}

impl<'p> Ctx<'p> {
    fn new(p: &'p Program) -> Self {
        Ctx {
            p,
            matcher: Matcher::new(p),
            history: PropHistory::default(),
            next: 1,
            log: Vec::new(),
        }
    }

    fn fresh(&mut self) -> Id {
        let id = self.next;
        self.next += 1;
        id
    }

    /// A correct single step against `store`, with globally fresh ids.
    fn step(&mut self, w: usize, store: &mut Store, goal: Goal) -> Out {
        match goal {
            Goal::Eq(e) => {
                let woken = store.add_equation(&e).unwrap_or_default();
                self.log.push(format!("w{w}: solve {e}"));
                Out {
                    fired: false,
                    front: None,
                    back: woken.into_iter().map(Goal::Numbered).collect(),
                }
            }
            Goal::Chr(c) => {
                let id = self.fresh();
                let nc = store.insert_numbered(id, &c).expect("fresh id");
                self.log.push(format!("w{w}: activate {nc}"));
                Out {
                    fired: false,
                    front: Some(Goal::Numbered(nc)),
                    back: Vec::new(),
                }
            }
            Goal::Numbered(nc) => self.execute(w, store, nc, true),
        }
    }

    fn execute(&mut self, w: usize, store: &mut Store, g: NumberedConstraint, stored: bool) -> Out {
        let g = if stored {
            match store.get(g.id) {
                Some(cur) => cur,
                None => return Out::default(),
            }
        } else {
            g
        };
        let hist = &self.history;
        let Some(inst) = self.matcher.find(self.p, store, &g, &|r, ids| hist.contains(r, ids)) else {
            self.log.push(format!("w{w}: drop {g}"));
            return Out::default();
        };
        let eff = plan_effect(self.p, &g, &inst);
        let kill: Vec<Id> = eff.kill.iter().copied().filter(|id| store.is_alive(*id)).collect();
        store.kill(&kill).expect("alive");
        if let Some((r, ids)) = eff.record {
            self.history.insert(r, ids);
        }
        self.log.push(format!("w{w}: fire {} on {:?}", eff.step.rule.as_deref().unwrap_or("?"), eff.step.heads));
        Out {
            fired: true,
            front: eff.keep,
            back: eff.body,
        }
    }
}

/// Runs `goals` on the broken executor `variant`.
pub fn run_pitfall(variant: Pitfall, p: &Program, goals: Vec<Constraint>) -> PitfallRun {
    match variant {
        Pitfall::StoreOnDrop => store_on_drop(p, goals),
        Pitfall::SplitStore => split_store(p, goals),
        Pitfall::MultiStepBeforeJoin => multi_step(p, goals),
    }
}

fn store_on_drop(p: &Program, goals: Vec<Constraint>) -> PitfallRun {
    let mut cx = Ctx::new(p);
    let mut store = Store::new();
    let mut pool: VecDeque<Goal> = goals.into_iter().map(Goal::from).collect();
    let mut rounds = 0;
    while !pool.is_empty() && rounds < MAX_ROUNDS {
        rounds += 1;
        let round: Vec<Goal> = (0..WORKERS).filter_map(|_| pool.pop_front()).collect();
        let snapshot = store.clone();
        let mut fronts = Vec::new();
        for (w, goal) in round.into_iter().enumerate() {
            match goal {
                Goal::Chr(c) => {
                    let nc = NumberedConstraint {
                        id: cx.fresh(),
                        constraint: snapshot.theta().resolve_chr(&c),
                    };
                    cx.log.push(format!("w{w}: activate {nc} without storing it"));
                    fronts.push(Goal::Numbered(nc));
                }
                Goal::Numbered(nc) if !store.is_alive(nc.id) => {
                    let mut view = snapshot.clone();
                    let out = cx.execute(w, &mut view, nc.clone(), false);
                    if !out.fired {
                        store.insert_numbered(nc.id, &nc.constraint).expect("fresh id");
                        cx.log.push(format!("w{w}: store {nc} on drop"));
                    } else {
                        // Commit the partners this firing removed in the view.
                        let dead: Vec<Id> = store.alive().map(|(id, _)| id).filter(|id| !view.is_alive(*id)).collect();
                        store.kill(&dead).expect("alive");
                        fronts.extend(out.front);
                        pool.extend(out.back);
                    }
                }
                other => {
                    let out = cx.step(w, &mut store, other);
                    fronts.extend(out.front);
                    pool.extend(out.back);
                }
            }
        }
        for g in fronts.into_iter().rev() {
            pool.push_front(g);
        }
    }
    finish(cx, store, pool)
}

fn split_store(p: &Program, goals: Vec<Constraint>) -> PitfallRun {
    let mut cx = Ctx::new(p);
    let mut stores = [Store::new(), Store::new()];
    let mut pools: [VecDeque<Goal>; WORKERS] = Default::default();
    for (i, g) in goals.into_iter().enumerate() {
        pools[i % WORKERS].push_back(Goal::from(g));
    }
    let mut rounds = 0;
    while pools.iter().any(|q| !q.is_empty()) && rounds < MAX_ROUNDS {
        rounds += 1;
        for w in 0..WORKERS {
            if let Some(goal) = pools[w].pop_front() {
                let out = cx.step(w, &mut stores[w], goal);
                pools[w].extend(out.back);
                if let Some(f) = out.front {
                    pools[w].push_front(f);
                }
            }
        }
    }
    let mut merged = Store::new();
    let mut all: Vec<(Id, crate::term::ChrConstraint)> = stores
        .iter()
        .flat_map(|s| s.alive().map(|(id, c)| (id, c.clone())).collect::<Vec<_>>())
        .collect();
    all.sort();
    for (id, c) in all {
        merged.insert_numbered(id, &c).expect("ids are unique");
    }
    for s in &stores {
        for e in s.equations() {
            let _ = merged.add_equation(e);
        }
    }
    let rest = pools.into_iter().flatten().collect();
    finish(cx, merged, rest)
}

fn multi_step(p: &Program, goals: Vec<Constraint>) -> PitfallRun {
    let mut cx = Ctx::new(p);
    let mut store = Store::new();
    let mut pool: VecDeque<Goal> = goals.into_iter().map(Goal::from).collect();
    let mut rounds = 0;
    while !pool.is_empty() && rounds < MAX_ROUNDS {
        rounds += 1;
        let round: Vec<Goal> = (0..WORKERS).filter_map(|_| pool.pop_front()).collect();
        let mut locals = Vec::new();
        for (w, goal) in round.into_iter().enumerate() {
            let mut local = store.clone();
            let mut current = Some(goal);
            let mut eqs = Vec::new();
            while let Some(g) = current.take() {
                if let Goal::Eq(e) = &g {
                    eqs.push(e.clone());
                }
                let out = cx.step(w, &mut local, g);
                pool.extend(out.back);
                current = out.front;
            }
            locals.push((local, eqs));
        }
        let mut born: Vec<(Id, crate::term::ChrConstraint)> = Vec::new();
        let mut dead: Vec<Id> = Vec::new();
        for (local, _) in &locals {
            born.extend(
                local
                    .alive()
                    .filter(|(id, _)| *id >= store.next_id())
                    .map(|(id, c)| (id, c.clone())),
            );
            dead.extend(store.alive().map(|(id, _)| id).filter(|id| !local.is_alive(*id)));
        }
        born.sort();
        dead.sort_unstable();
        dead.dedup();
        store.kill(&dead).expect("alive before the round");
        for (id, c) in born {
            store.insert_numbered(id, &c).expect("fresh id");
        }
        for (_, eqs) in locals {
            for e in eqs {
                let _ = store.add_equation(&e);
            }
        }
        cx.log.push(format!("join: store is now {}", store.dump().replace('\n', " ").trim_end()));
    }
    finish(cx, store, pool)
}

fn finish(cx: Ctx<'_>, store: Store, goals: VecDeque<Goal>) -> PitfallRun {
    PitfallRun {
        state: State { goals, store },
        history: cx.history,
        log: cx.log,
    }
}
