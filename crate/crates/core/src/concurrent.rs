//! Multi-worker executor over one shared store.
//!
//! Each worker takes one goal from a shared pool and performs one
//! derivation step. Partner search runs under a read lock; the resulting
//! firing is validated and committed under the write lock. Validation
//! rejects a firing if one of its heads died, if it repeats a propagation,
//! or if it would simplify a constraint that another firing committed in the
//! meantime kept or woke. Aborted firings search again from scratch.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::goal_engine::{
    enqueue_body, plan_effect, Exec, Matcher, Policy, PropHistory, Run, SideEffect, Status, StepKind, Trace,
    TraceStep,
};
use crate::store::{Goal, Id, NumberedConstraint, State, Store};
use crate::syntax::Program;
use crate::term::Constraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub workers: usize,
    /// Seeds the per-worker scheduling jitter. Only used with more than
    /// one worker.
    pub seed: u64,
    pub max_steps: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            seed: 0,
            max_steps: Some(1_000_000),
        }
    }
}

struct Core {
    store: Store,
    history: PropHistory,
    /// `(commit tick, ids kept or woken)` for every committed step.
    kept_log: Vec<(u64, Vec<Id>)>,
}

#[derive(Default)]
struct Pool {
    goals: VecDeque<Goal>,
    active: usize,
    finished: bool,
}

struct Shared<'p> {
    program: &'p Program,
    matcher: Matcher,
    core: RwLock<Core>,
    pool: Mutex<Pool>,
    wake: Condvar,
    clock: AtomicU64,
    seq: AtomicU64,
    steps: Mutex<Vec<TraceStep>>,
    stop: AtomicBool,
    failed: AtomicBool,
    step_limit: AtomicBool,
    max_steps: Option<u64>,
    aborts: AtomicU64,
}

/// Goals returned to the pool after a step.
struct Continuation {
    front: Option<Goal>,
    back: Vec<Goal>,
}

impl Continuation {
    fn none() -> Self {
        Continuation {
            front: None,
            back: Vec::new(),
        }
    }
}

impl Shared<'_> {
    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst) + 1
    }

    /// Records a step and enforces the step budget. Must be called while
    /// holding a lock on `core` so that seq order matches store order.
    fn record(&self, mut step: TraceStep, exec: Exec) {
        step.seq = self.seq.fetch_add(1, Ordering::SeqCst) + 1;
        step.exec = Some(exec);
        if self.max_steps.is_some_and(|m| step.seq >= m) {
            self.step_limit.store(true, Ordering::SeqCst);
            self.stop.store(true, Ordering::SeqCst);
        }
        self.steps.lock().unwrap().push(step);
    }

    fn next_goal(&self, rng: &mut Option<ChaCha8Rng>) -> Option<Goal> {
        let mut pool = self.pool.lock().unwrap();
        loop {
            if pool.finished || self.stop.load(Ordering::SeqCst) {
                pool.finished = true;
                self.wake.notify_all();
                return None;
            }
            if !pool.goals.is_empty() {
                let i = match rng {
                    Some(r) => r.gen_range(0..pool.goals.len().min(3)),
                    None => 0,
                };
                pool.active += 1;
                return pool.goals.remove(i);
            }
            if pool.active == 0 {
                pool.finished = true;
                self.wake.notify_all();
                return None;
            }
            pool = self.wake.wait(pool).unwrap();
        }
    }

    fn finish_goal(&self, cont: Continuation) {
        let mut pool = self.pool.lock().unwrap();
        enqueue_body(&mut pool.goals, Policy::Fifo, cont.back, cont.front);
        pool.active -= 1;
        self.wake.notify_all();
    }

    fn step(&self, worker: usize, goal: Goal, rng: &mut Option<ChaCha8Rng>) -> Continuation {
        match goal {
            Goal::Eq(e) => {
                let mut core = self.core.write().unwrap();
                let t = self.tick();
                let woken = match core.store.add_equation(&e) {
                    Ok(w) => w,
                    Err(_) => {
                        self.failed.store(true, Ordering::SeqCst);
                        self.stop.store(true, Ordering::SeqCst);
                        Vec::new()
                    }
                };
                let mut step = TraceStep::new(StepKind::Solve, Goal::Eq(e));
                step.delta.propagated = woken.iter().map(|w| w.id).collect();
                core.kept_log.push((t, woken.iter().map(|w| w.id).collect()));
                self.record(step, Exec { worker, start: t, commit: t });
                Continuation {
                    front: None,
                    back: woken.into_iter().map(Goal::Numbered).collect(),
                }
            }
            Goal::Chr(c) => {
                let mut core = self.core.write().unwrap();
                let t = self.tick();
                let nc = core.store.insert(&c);
                let step = TraceStep::new(
                    StepKind::Activate,
                    Goal::Numbered(NumberedConstraint { id: nc.id, constraint: c }),
                );
                self.record(step, Exec { worker, start: t, commit: t });
                Continuation {
                    front: Some(Goal::Numbered(nc)),
                    back: Vec::new(),
                }
            }
            Goal::Numbered(nc) => self.execute(worker, nc, rng),
        }
    }

    fn execute(&self, worker: usize, goal: NumberedConstraint, rng: &mut Option<ChaCha8Rng>) -> Continuation {
        loop {
            let (start, eff) = {
                let core = self.core.read().unwrap();
                let start = self.tick();
                let Some(g) = core.store.get(goal.id) else {
                    let t = self.tick();
                    self.record(TraceStep::new(StepKind::Drop, Goal::Numbered(goal)), Exec { worker, start, commit: t });
                    return Continuation::none();
                };
                let found = self
                    .matcher
                    .find(self.program, &core.store, &g, &|r, ids| core.history.contains(r, ids));
                let Some(inst) = found else {
                    let t = self.tick();
                    self.record(TraceStep::new(StepKind::Drop, Goal::Numbered(g)), Exec { worker, start, commit: t });
                    return Continuation::none();
                };
                (start, plan_effect(self.program, &g, &inst))
            };
            if rng.as_mut().is_some_and(|r| r.gen_bool(0.5)) {
                std::thread::yield_now();
            }
            let mut core = self.core.write().unwrap();
            if !self.validate(&core, start, &eff.step) {
                self.aborts.fetch_add(1, Ordering::Relaxed);
                drop(core);
                continue;
            }
            core.store.kill(&eff.kill).expect("validated ids are alive");
            if let Some((r, ids)) = eff.record.clone() {
                core.history.insert(r, ids);
            }
            let t = self.tick();
            core.kept_log.push((t, eff.step.delta.propagated.iter().copied().collect()));
            self.record(eff.step, Exec { worker, start, commit: t });
            return Continuation {
                front: eff.keep,
                back: eff.body,
            };
        }
    }

    fn validate(&self, core: &Core, start: u64, step: &TraceStep) -> bool {
        if !step.heads.iter().all(|&id| core.store.is_alive(id)) {
            return false;
        }
        if let Some(r) = step.rule.as_deref().and_then(|n| self.program.rule(n)) {
            if r.1.is_propagation() {
                let mut ids = step.heads.clone();
                ids.sort_unstable();
                if core.history.contains(r.0, &ids) {
                    return false;
                }
            }
        }
        core.kept_log
            .iter()
            .rev()
            .take_while(|(t, _)| *t > start)
            .all(|(_, kept)| !kept.iter().any(|id| step.delta.simplified.contains(id)))
    }
}

/// Runs `goals` to completion with `cfg.workers` threads.
pub fn run_concurrent(goals: Vec<Constraint>, p: &Program, cfg: EngineConfig) -> Run {
    run_counting(goals, p, cfg).0
}

/// Like [`run_concurrent`], also returning the number of aborted commits.
pub fn run_counting(goals: Vec<Constraint>, p: &Program, cfg: EngineConfig) -> (Run, u64) {
    let workers = cfg.workers.max(1);
    let shared = Shared {
        program: p,
        matcher: Matcher::new(p),
        core: RwLock::new(Core {
            store: Store::new(),
            history: PropHistory::default(),
            kept_log: Vec::new(),
        }),
        pool: Mutex::new(Pool {
            goals: goals.into_iter().map(Goal::from).collect(),
            ..Pool::default()
        }),
        wake: Condvar::new(),
        clock: AtomicU64::new(0),
        seq: AtomicU64::new(0),
        steps: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        failed: AtomicBool::new(false),
        step_limit: AtomicBool::new(false),
        max_steps: cfg.max_steps,
        aborts: AtomicU64::new(0),
    };
    std::thread::scope(|s| {
        for w in 0..workers {
            let shared = &shared;
            s.spawn(move || {
                let mut rng = (workers > 1).then(|| ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(w as u64)));
                while let Some(goal) = shared.next_goal(&mut rng) {
                    let cont = shared.step(w, goal, &mut rng);
                    shared.finish_goal(cont);
                }
            });
        }
    });
    let core = shared.core.into_inner().unwrap();
    let pool = shared.pool.into_inner().unwrap();
    let mut steps = shared.steps.into_inner().unwrap();
    steps.sort_by_key(|s| s.seq);
    let status = if shared.failed.load(Ordering::SeqCst) {
        Status::Failed
    } else if shared.step_limit.load(Ordering::SeqCst) && !pool.goals.is_empty() {
        Status::StepLimit
    } else {
        Status::Done
    };
    let trace = Trace {
        engine: "concurrent".into(),
        workers,
        seed: Some(cfg.seed),
        steps,
        status,
        final_dump: core.store.dump(),
    };
    let run = Run {
        state: State {
            goals: pool.goals,
            store: core.store,
        },
        history: core.history,
        trace,
    };
    (run, shared.aborts.into_inner())
}

/// A set of time-overlapping steps and their composed side effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub seqs: Vec<u64>,
    pub delta: SideEffect,
}

/// Two time-overlapping steps whose side effects overlap.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("steps {first} and {second} overlap in time and in side effects ({first_delta} vs {second_delta})")]
pub struct Violation {
    pub first: u64,
    pub second: u64,
    pub first_delta: SideEffect,
    pub second_delta: SideEffect,
}

fn overlaps(a: &Exec, b: &Exec) -> bool {
    a.start < b.commit && b.start < a.commit
}

/// Splits the steps of a trace into groups of transitively time-overlapping
/// steps and checks every overlapping pair inside a group for
/// non-overlapping side effects. Steps without timing are singletons.
pub fn decompose_k(steps: &[TraceStep]) -> Result<Vec<Group>, Violation> {
    let mut timed: Vec<(&TraceStep, Exec)> = steps.iter().filter_map(|s| s.exec.map(|e| (s, e))).collect();
    timed.sort_by_key(|(s, e)| (e.start, s.seq));
    let mut groups: Vec<Vec<(&TraceStep, Exec)>> = Vec::new();
    let mut end = 0;
    for (s, e) in timed {
        match groups.last_mut() {
            Some(g) if e.start < end => {
                g.push((s, e));
                end = end.max(e.commit);
            }
            _ => {
                groups.push(vec![(s, e)]);
                end = e.commit;
            }
        }
    }
    let mut out = Vec::new();
    for g in &groups {
        for (i, (a, ea)) in g.iter().enumerate() {
            for (b, eb) in &g[i + 1..] {
                if overlaps(ea, eb) && !a.delta.non_overlapping(&b.delta) {
                    let (x, y) = if a.seq < b.seq { (a, b) } else { (b, a) };
                    return Err(Violation {
                        first: x.seq,
                        second: y.seq,
                        first_delta: x.delta.clone(),
                        second_delta: y.delta.clone(),
                    });
                }
            }
        }
        let mut delta = SideEffect::default();
        for (s, _) in g {
            delta = delta.compose(&s.delta);
        }
        let mut seqs: Vec<u64> = g.iter().map(|(s, _)| s.seq).collect();
        seqs.sort_unstable();
        out.push(Group { seqs, delta });
    }
    for s in steps.iter().filter(|s| s.exec.is_none()) {
        out.push(Group {
            seqs: vec![s.seq],
            delta: s.delta.clone(),
        });
    }
    Ok(out)
}

/// Pairs of rule firings whose execution intervals overlap.
pub fn overlapping_firings(steps: &[TraceStep]) -> Vec<(u64, u64)> {
    let firings: Vec<(&TraceStep, Exec)> = steps
        .iter()
        .filter(|s| s.kind.is_firing())
        .filter_map(|s| s.exec.map(|e| (s, e)))
        .collect();
    let mut out = Vec::new();
    for (i, (a, ea)) in firings.iter().enumerate() {
        for (b, eb) in &firings[i + 1..] {
            if overlaps(ea, eb) {
                out.push((a.seq.min(b.seq), a.seq.max(b.seq)));
            }
        }
    }
    out
}
