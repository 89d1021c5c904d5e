//! Sequential goal-based interpreter.
//!
//! Goals are executed one at a time. An equation is solved, an inactive CHR
//! constraint is numbered and stored, and an active numbered constraint
//! searches for partners to fire a rule or is dropped.

mod join;
mod trace;

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::abstract_engine::{firings, AbstractStore};
use crate::store::{Goal, Id, NumberedConstraint, State};
use crate::syntax::{Program, Role};
use crate::term::{Constraint, Equation};

pub use join::{Instance, JoinPlan, Matcher};
pub use trace::{Exec, SideEffect, Status, StepKind, Trace, TraceError, TraceStep};

/// Where new goals go in the goal sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Body and woken goals queue up behind the existing goals.
    #[default]
    Fifo,
    /// Body and woken goals run before the existing goals.
    Lifo,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Fifo => "fifo",
            Policy::Lifo => "lifo",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fifo" => Ok(Policy::Fifo),
            "lifo" => Ok(Policy::Lifo),
            _ => Err(format!("unknown goal policy `{s}` (expected fifo or lifo)")),
        }
    }
}

/// Fired instances of pure propagation rules, keyed by rule and sorted ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropHistory {
    fired: BTreeSet<(usize, Vec<Id>)>,
}

impl PropHistory {
    pub fn contains(&self, rule: usize, sorted_ids: &[Id]) -> bool {
        self.fired.contains(&(rule, sorted_ids.to_vec()))
    }

    /// Returns false if the instance was already recorded.
    pub fn insert(&mut self, rule: usize, sorted_ids: Vec<Id>) -> bool {
        self.fired.insert((rule, sorted_ids))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, Vec<Id>)> {
        self.fired.iter()
    }

    pub fn len(&self) -> usize {
        self.fired.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fired.is_empty()
    }
}

/// Adds the goals produced by a firing. `keep` is the active constraint
/// when it stays active (propagated role).
pub fn enqueue_body(goals: &mut VecDeque<Goal>, policy: Policy, body: Vec<Goal>, keep: Option<Goal>) {
    match policy {
        Policy::Fifo => {
            goals.extend(body);
            if let Some(g) = keep {
                goals.push_front(g);
            }
        }
        Policy::Lifo => {
            if let Some(g) = keep {
                goals.push_front(g);
            }
            for b in body.into_iter().rev() {
                goals.push_front(b);
            }
        }
    }
}

/// Adds constraints woken by a Solve step, keeping ascending id order.
pub fn enqueue_woken(goals: &mut VecDeque<Goal>, policy: Policy, woken: Vec<Goal>) {
    match policy {
        Policy::Fifo => goals.extend(woken),
        Policy::Lifo => {
            for w in woken.into_iter().rev() {
                goals.push_front(w);
            }
        }
    }
}

/// Solve: moves `e` into the store and reactivates the constraints whose
/// normal form changes. On inconsistency the store is flagged.
pub fn step_solve(state: &mut State, e: Equation, policy: Policy) -> TraceStep {
    let woken = state.store.add_equation(&e).unwrap_or_default();
    let mut step = TraceStep::new(StepKind::Solve, Goal::Eq(e));
    step.delta.propagated = woken.iter().map(|w| w.id).collect();
    enqueue_woken(&mut state.goals, policy, woken.into_iter().map(Goal::Numbered).collect());
    step
}

/// Activate: numbers `c`, stores it, and makes it the next goal.
pub fn step_activate(state: &mut State, c: crate::term::ChrConstraint) -> TraceStep {
    let nc = state.store.insert(&c);
    state.goals.push_front(Goal::Numbered(nc.clone()));
    TraceStep::new(
        StepKind::Activate,
        Goal::Numbered(NumberedConstraint { id: nc.id, constraint: c }),
    )
}

/// Everything a firing does, computed before touching the state.
#[derive(Debug, Clone)]
pub struct Effect {
    pub step: TraceStep,
    pub kill: Vec<Id>,
    pub body: Vec<Goal>,
    pub keep: Option<Goal>,
    /// History entry to record, for pure propagation rules.
    pub record: Option<(usize, Vec<Id>)>,
}

pub fn plan_effect(p: &Program, g: &NumberedConstraint, inst: &Instance) -> Effect {
    let rule = &p.rules[inst.rule];
    let kind = match inst.role {
        Role::Simplified => StepKind::Simplify,
        Role::Propagated => StepKind::Propagate,
    };
    let mut step = TraceStep::new(kind, Goal::Numbered(g.clone()));
    step.rule = Some(rule.name.clone());
    step.phi = Some(inst.phi.clone());
    step.heads = inst.heads.clone();
    step.delta.propagated = inst.propagated(p).iter().copied().collect();
    step.delta.simplified = inst.simplified(p).iter().copied().collect();
    Effect {
        step,
        kill: inst.simplified(p).to_vec(),
        body: rule.body.iter().map(|b| Goal::from(inst.phi.resolve(b))).collect(),
        keep: (inst.role == Role::Propagated).then(|| Goal::Numbered(g.clone())),
        record: rule.is_propagation().then(|| (inst.rule, inst.sorted_ids())),
    }
}

/// Runs an active goal: fires the first applicable instance or drops it.
/// A goal whose constraint is no longer stored is dropped.
pub fn execute_goal(
    state: &mut State,
    goal: &NumberedConstraint,
    p: &Program,
    matcher: &Matcher,
    history: &mut PropHistory,
    policy: Policy,
) -> TraceStep {
    let Some(g) = state.store.get(goal.id) else {
        return TraceStep::new(StepKind::Drop, Goal::Numbered(goal.clone()));
    };
    let found = matcher.find(p, &state.store, &g, &|r, ids| history.contains(r, ids));
    let Some(inst) = found else {
        return TraceStep::new(StepKind::Drop, Goal::Numbered(g));
    };
    let eff = plan_effect(p, &g, &inst);
    state
        .store
        .kill(&eff.kill)
        .expect("matched constraints are alive");
    if let Some((r, ids)) = eff.record {
        history.insert(r, ids);
    }
    enqueue_body(&mut state.goals, policy, eff.body, eff.keep);
    eff.step
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqConfig {
    pub policy: Policy,
    pub max_steps: Option<u64>,
    /// Check the active-instance invariant after every step.
    pub check_invariants: bool,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            policy: Policy::Fifo,
            max_steps: Some(1_000_000),
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant violated after step {seq}: {detail}")]
pub struct InvariantBreach {
    pub seq: u64,
    pub detail: String,
}

/// Outcome of an engine run.
#[derive(Debug, Clone)]
pub struct Run {
    pub state: State,
    pub history: PropHistory,
    pub trace: Trace,
}

impl Run {
    pub fn status(&self) -> Status {
        self.trace.status
    }

    pub fn dump(&self) -> String {
        self.state.store.dump()
    }

    /// Final store without ids.
    pub fn answer(&self) -> crate::abstract_engine::Answer {
        crate::abstract_engine::canonical_answer(&self.state.store.drop_ids())
    }
}

/// Every rule-head instance in the store must involve a constraint that is
/// still an active goal.
pub fn check_active_instances(state: &State, history: &PropHistory, p: &Program) -> Result<(), String> {
    let active: HashSet<Id> = state
        .goals
        .iter()
        .filter_map(|g| match g {
            Goal::Numbered(nc) => Some(nc.id),
            _ => None,
        })
        .collect();
    let view = AbstractStore::from_store(&state.store, history.iter().cloned());
    for f in firings(&view, p) {
        if !f.heads.iter().any(|id| active.contains(id)) {
            return Err(format!(
                "instance of rule `{}` on ids {:?} has no active goal",
                p.rules[f.rule].name, f.heads
            ));
        }
    }
    Ok(())
}

/// Step-at-a-time sequential interpreter.
pub struct Sequential<'p> {
    program: &'p Program,
    matcher: Matcher,
    pub state: State,
    pub history: PropHistory,
    policy: Policy,
    seq: u64,
}

impl<'p> Sequential<'p> {
    pub fn new(program: &'p Program, goals: impl IntoIterator<Item = Constraint>, policy: Policy) -> Self {
        Sequential {
            program,
            matcher: Matcher::new(program),
            state: State::initial(goals),
            history: PropHistory::default(),
            policy,
            seq: 0,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.state.store.is_inconsistent()
    }

    /// Performs one derivation step. `None` once no goals are left or the
    /// equations became inconsistent.
    pub fn step(&mut self) -> Option<TraceStep> {
        if self.is_failed() {
            return None;
        }
        let goal = self.state.goals.pop_front()?;
        let mut step = match goal {
            Goal::Eq(e) => step_solve(&mut self.state, e, self.policy),
            Goal::Chr(c) => step_activate(&mut self.state, c),
            Goal::Numbered(nc) => execute_goal(
                &mut self.state,
                &nc,
                self.program,
                &self.matcher,
                &mut self.history,
                self.policy,
            ),
        };
        self.seq += 1;
        step.seq = self.seq;
        Some(step)
    }

    pub fn run(mut self, cfg: SeqConfig) -> Result<Run, InvariantBreach> {
        let mut steps = Vec::new();
        let mut status = Status::Done;
        loop {
            if cfg.max_steps.is_some_and(|m| steps.len() as u64 >= m) && !self.state.goals.is_empty() {
                status = Status::StepLimit;
                break;
            }
            let Some(step) = self.step() else { break };
            let seq = step.seq;
            steps.push(step);
            if cfg.check_invariants && !self.is_failed() {
                check_active_instances(&self.state, &self.history, self.program)
                    .map_err(|detail| InvariantBreach { seq, detail })?;
            }
        }
        if self.is_failed() {
            status = Status::Failed;
        }
        let trace = Trace {
            engine: "sequential".into(),
            workers: 1,
            seed: None,
            steps,
            status,
            final_dump: self.state.store.dump(),
        };
        Ok(Run {
            state: self.state,
            history: self.history,
            trace,
        })
    }
}

pub fn run_sequential(goals: Vec<Constraint>, p: &Program, cfg: SeqConfig) -> Result<Run, InvariantBreach> {
    Sequential::new(p, goals, cfg.policy).run(cfg)
}
