//! Executable correspondence checks over serialized traces.
//!
//! The replayer below keeps its own store and recomputes normal forms and
//! wake-ups from scratch with [`mgu`], so it does not share bookkeeping
//! with the engines it checks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::abstract_engine::{apply_instance, canonical_answer, is_final, AbstractStore, Firing, Tag};
use crate::concurrent::decompose_k;
use crate::goal_engine::{PropHistory, Status, StepKind, Trace, TraceStep};
use crate::store::{Goal, Id, State};
use crate::syntax::Program;
use crate::term::{guard_holds, mgu, ChrConstraint, Constraint, Equation, Substitution};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub passed: bool,
    pub check: &'static str,
    /// First counterexample; empty when passed.
    pub detail: String,
}

impl Verdict {
    fn pass(check: &'static str) -> Self {
        Verdict {
            passed: true,
            check,
            detail: String::new(),
        }
    }

    fn fail(check: &'static str, detail: impl Into<String>) -> Self {
        Verdict {
            passed: false,
            check,
            detail: detail.into(),
        }
    }

    fn from_result(check: &'static str, r: Result<(), String>) -> Self {
        match r {
            Ok(()) => Verdict::pass(check),
            Err(d) => Verdict::fail(check, d),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(f, "PASS {}", self.check)
        } else {
            write!(f, "FAIL {}: {}", self.check, self.detail)
        }
    }
}

/// Un-numbered goals: CHR constraints and equations.
pub fn no_ids<'a>(goals: impl IntoIterator<Item = &'a Goal>) -> Vec<Constraint> {
    goals
        .into_iter()
        .filter_map(|g| match g {
            Goal::Eq(e) => Some(Constraint::Eq(e.clone())),
            Goal::Chr(c) => Some(Constraint::Chr(c.clone())),
            Goal::Numbered(_) => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum GoalKey {
    Plain(Constraint),
    Numbered(Id),
}

/// Independent re-execution of a trace.
struct Replayer<'p> {
    p: &'p Program,
    chr: BTreeMap<Id, ChrConstraint>,
    eqs: Vec<Equation>,
    theta: Substitution,
    inconsistent: bool,
    next: Id,
    goals: HashMap<GoalKey, usize>,
    plain_order: Vec<Constraint>,
    history: BTreeSet<(usize, Vec<Id>)>,
}

impl<'p> Replayer<'p> {
    fn new(p: &'p Program, goals0: &[Constraint]) -> Self {
        let mut r = Replayer {
            p,
            chr: BTreeMap::new(),
            eqs: Vec::new(),
            theta: Substitution::new(),
            inconsistent: false,
            next: 1,
            goals: HashMap::new(),
            plain_order: Vec::new(),
            history: BTreeSet::new(),
        };
        for g in goals0 {
            r.add_goal(GoalKey::Plain(g.clone()));
        }
        r
    }

    fn add_goal(&mut self, k: GoalKey) {
        if let GoalKey::Plain(c) = &k {
            self.plain_order.push(c.clone());
        }
        *self.goals.entry(k).or_default() += 1;
    }

    fn take_goal(&mut self, k: &GoalKey) -> Result<(), String> {
        match self.goals.get_mut(k) {
            Some(n) if *n > 0 => {
                *n -= 1;
                if *n == 0 {
                    self.goals.remove(k);
                }
                if let GoalKey::Plain(c) = k {
                    let i = self.plain_order.iter().position(|x| x == c).expect("tracked goal");
                    self.plain_order.remove(i);
                }
                Ok(())
            }
            _ => Err(format!("goal {k:?} is not in the goal multiset")),
        }
    }

    fn normal(&self, id: Id) -> Option<ChrConstraint> {
        self.chr.get(&id).map(|c| self.theta.resolve_chr(c))
    }

    /// NoIds(G) ⊎ DropIds(Sn), with store constraints tagged by id.
    fn projection(&self) -> Vec<(Tag, Constraint)> {
        let mut out: Vec<(Tag, Constraint)> = self
            .chr
            .iter()
            .map(|(id, c)| (*id, Constraint::Chr(c.clone())))
            .collect();
        let base: Tag = 1 << 40;
        let extra = self
            .eqs
            .iter()
            .cloned()
            .map(Constraint::Eq)
            .chain(self.plain_order.iter().cloned());
        out.extend(extra.enumerate().map(|(i, c)| (base + i as Tag, c)));
        out
    }

    fn dump(&self) -> String {
        let mut out = String::new();
        for id in self.chr.keys() {
            out.push_str(&format!("{}#{id}\n", self.normal(*id).expect("alive")));
        }
        let mut eqs: Vec<String> = self.eqs.iter().map(ToString::to_string).collect();
        eqs.sort();
        for e in eqs {
            out.push_str(&e);
            out.push('\n');
        }
        out
    }

    /// Does some rule instance involving `id` apply right now?
    fn applicable_with(&self, id: Id) -> Option<String> {
        let c = self.normal(id)?;
        for (ri, rule) in self.p.rules.iter().enumerate() {
            for pos in 0..rule.head_len() {
                let Some(phi) = crate::term::match_chr(rule.head_at(pos), &c, &Substitution::new()) else {
                    continue;
                };
                let mut heads = vec![0; rule.head_len()];
                heads[pos] = id;
                if let Some(found) = self.complete(ri, 0, pos, phi, &mut heads) {
                    return Some(found);
                }
            }
        }
        None
    }

    fn complete(&self, ri: usize, at: usize, skip: usize, phi: Substitution, heads: &mut Vec<Id>) -> Option<String> {
        let rule = &self.p.rules[ri];
        if at == rule.head_len() {
            if !guard_holds(&self.theta, &phi, &rule.guard) {
                return None;
            }
            if rule.is_propagation() {
                let mut ids = heads.clone();
                ids.sort_unstable();
                if self.history.contains(&(ri, ids)) {
                    return None;
                }
            }
            return Some(format!("rule `{}` applies to ids {:?}", rule.name, heads));
        }
        if at == skip {
            return self.complete(ri, at + 1, skip, phi, heads);
        }
        for (&id, c) in &self.chr {
            if heads.contains(&id) {
                continue;
            }
            let c = self.theta.resolve_chr(c);
            if let Some(next) = crate::term::match_chr(rule.head_at(at), &c, &phi) {
                heads[at] = id;
                let r = self.complete(ri, at + 1, skip, next, heads);
                heads[at] = 0;
                if r.is_some() {
                    return r;
                }
            }
        }
        None
    }

    fn apply(&mut self, step: &TraceStep) -> Result<(), String> {
        if self.inconsistent {
            return Err("step after the equations became inconsistent".into());
        }
        match step.kind {
            StepKind::Solve => self.solve(step),
            StepKind::Activate => self.activate(step),
            StepKind::Drop => self.drop_goal(step),
            StepKind::Simplify | StepKind::Propagate => self.fire(step),
        }
    }

    fn solve(&mut self, step: &TraceStep) -> Result<(), String> {
        let Goal::Eq(e) = &step.goal else {
            return Err("solve step without an equation goal".into());
        };
        self.take_goal(&GoalKey::Plain(Constraint::Eq(e.clone())))?;
        self.eqs.push(e.clone());
        let woken: BTreeSet<Id> = match mgu(&self.eqs) {
            Ok(theta) => {
                let w = self
                    .chr
                    .iter()
                    .filter(|(_, c)| self.theta.resolve_chr(c) != theta.resolve_chr(c))
                    .map(|(id, _)| *id)
                    .collect();
                self.theta = theta;
                w
            }
            Err(_) => {
                self.inconsistent = true;
                BTreeSet::new()
            }
        };
        if woken != step.delta.propagated || !step.delta.simplified.is_empty() {
            return Err(format!("solve wakes {woken:?} but the trace records {}", step.delta));
        }
        for id in woken {
            self.add_goal(GoalKey::Numbered(id));
        }
        Ok(())
    }

    fn activate(&mut self, step: &TraceStep) -> Result<(), String> {
        let Goal::Numbered(nc) = &step.goal else {
            return Err("activate step without an id".into());
        };
        self.take_goal(&GoalKey::Plain(Constraint::Chr(nc.constraint.clone())))?;
        if nc.id != self.next {
            return Err(format!("activation uses id {} but the next fresh id is {}", nc.id, self.next));
        }
        if !step.delta.is_empty() {
            return Err("activation with a side effect".into());
        }
        self.next += 1;
        self.chr.insert(nc.id, nc.constraint.clone());
        self.add_goal(GoalKey::Numbered(nc.id));
        Ok(())
    }

    fn drop_goal(&mut self, step: &TraceStep) -> Result<(), String> {
        let id = step.goal_id().ok_or("drop step without an id")?;
        self.take_goal(&GoalKey::Numbered(id))?;
        if !step.delta.is_empty() {
            return Err("drop with a side effect".into());
        }
        if let Some(found) = self.applicable_with(id) {
            return Err(format!("#{id} dropped although {found}"));
        }
        Ok(())
    }

    fn fire(&mut self, step: &TraceStep) -> Result<(), String> {
        let id = step.goal_id().ok_or("firing without an active goal")?;
        let name = step.rule.as_deref().ok_or("firing without a rule")?;
        let (ri, rule) = self.p.rule(name).ok_or_else(|| format!("unknown rule `{name}`"))?;
        let phi = step.phi.as_ref().ok_or("firing without a matching")?;
        if step.heads.len() != rule.head_len() {
            return Err(format!("rule `{name}` has {} heads, trace lists {}", rule.head_len(), step.heads.len()));
        }
        let distinct: BTreeSet<Id> = step.heads.iter().copied().collect();
        if distinct.len() != step.heads.len() {
            return Err("repeated head id".into());
        }
        let np = rule.propagated.len();
        let goal_pos = step
            .heads
            .iter()
            .position(|h| *h == id)
            .ok_or_else(|| format!("active goal #{id} is not among the heads"))?;
        let expected_kind = if goal_pos < np { StepKind::Propagate } else { StepKind::Simplify };
        if step.kind != expected_kind {
            return Err(format!("active goal sits at a head position that makes this a {expected_kind}"));
        }
        self.take_goal(&GoalKey::Numbered(id))?;
        for (pos, hid) in step.heads.iter().enumerate() {
            let c = self.normal(*hid).ok_or_else(|| format!("head #{hid} is not alive"))?;
            let want = self.theta.resolve_chr(&phi.apply_chr(rule.head_at(pos)));
            if want != c {
                return Err(format!("head {pos} is {want} under the matching but #{hid} is {c}"));
            }
        }
        if !guard_holds(&self.theta, phi, &rule.guard) {
            return Err(format!("guard of `{name}` is not entailed"));
        }
        if rule.is_propagation() {
            let mut ids = step.heads.clone();
            ids.sort_unstable();
            if !self.history.insert((ri, ids)) {
                return Err(format!("propagation `{name}` on {:?} fired twice", step.heads));
            }
        }
        let kept: BTreeSet<Id> = step.heads[..np].iter().copied().collect();
        let removed: BTreeSet<Id> = step.heads[np..].iter().copied().collect();
        if step.delta.propagated != kept || step.delta.simplified != removed {
            return Err(format!("side effect {} does not match heads {:?}", step.delta, step.heads));
        }
        for r in &removed {
            self.chr.remove(r);
        }
        self.history.retain(|(_, ids)| ids.iter().all(|i| !removed.contains(i)));
        if step.kind == StepKind::Propagate {
            self.add_goal(GoalKey::Numbered(id));
        }
        for b in &rule.body {
            self.add_goal(GoalKey::Plain(phi.resolve(b)));
        }
        Ok(())
    }

    fn final_checks(&self, trace: &Trace) -> Result<(), String> {
        let dump = self.dump();
        if dump != trace.final_dump {
            return Err(format!("final store differs:\nreplayed:\n{dump}engine:\n{}", trace.final_dump));
        }
        match (trace.status, self.inconsistent) {
            (Status::Failed, false) => Err("trace reports failure but the equations are consistent".into()),
            (Status::Done | Status::StepLimit, true) => Err("equations are inconsistent but the run did not fail".into()),
            (Status::Done, _) if !self.goals.is_empty() => Err("run reports done with goals left".into()),
            _ => Ok(()),
        }
    }

    fn abstract_view(&self) -> AbstractStore {
        AbstractStore::from_tagged(self.projection(), self.history.iter().cloned())
    }
}

fn check_seq(trace: &Trace) -> Result<(), String> {
    for (i, s) in trace.steps.iter().enumerate() {
        if s.seq != i as u64 + 1 {
            return Err(format!("step {} carries seq {}", i + 1, s.seq));
        }
    }
    Ok(())
}

/// Replays the trace step by step against a fresh store.
pub fn replay(trace: &Trace, goals0: &[Constraint], p: &Program) -> Verdict {
    Verdict::from_result("replay", replay_inner(trace, goals0, p).map(|_| ()))
}

fn replay_inner<'p>(trace: &Trace, goals0: &[Constraint], p: &'p Program) -> Result<Replayer<'p>, String> {
    check_seq(trace)?;
    let mut r = Replayer::new(p, goals0);
    for s in &trace.steps {
        r.apply(s).map_err(|e| format!("seq {}: {e}", s.seq))?;
    }
    r.final_checks(trace)?;
    Ok(r)
}

/// Checks that the id-free projection of every step is either unchanged or
/// one abstract rewrite step.
pub fn project_abstract(trace: &Trace, goals0: &[Constraint], p: &Program) -> Verdict {
    Verdict::from_result("project-abstract", project_inner(trace, goals0, p))
}

fn project_inner(trace: &Trace, goals0: &[Constraint], p: &Program) -> Result<(), String> {
    let mut r = Replayer::new(p, goals0);
    for s in &trace.steps {
        let before = r.abstract_view();
        r.apply(s).map_err(|e| format!("seq {}: {e}", s.seq))?;
        let after = r.abstract_view().answer();
        if s.kind.is_firing() {
            let (ri, _) = p.rule(s.rule.as_deref().unwrap_or_default()).expect("replay checked the rule");
            let f = Firing {
                rule: ri,
                phi: s.phi.clone().unwrap_or_default(),
                heads: s.heads.clone(),
            };
            let next = apply_instance(&before, p, &f)
                .ok_or_else(|| format!("seq {}: not an abstract rewrite step", s.seq))?;
            if next.answer() != after {
                return Err(format!("seq {}: abstract step gives {} but the projection is {after}", s.seq, next.answer()));
            }
        } else if before.answer() != after {
            return Err(format!("seq {}: {} step changed the projection from {} to {after}", s.seq, s.kind, before.answer()));
        }
    }
    Ok(())
}

/// A state without goals must have a final store.
pub fn check_final(state: &State, history: &PropHistory, p: &Program) -> Verdict {
    if !state.goals.is_empty() {
        return Verdict::fail("check-final", format!("{} goals left", state.goals.len()));
    }
    let view = AbstractStore::from_store(&state.store, history.iter().cloned());
    match crate::abstract_engine::find_firing(&view, p) {
        None => Verdict::pass("check-final"),
        Some(f) => Verdict::fail(
            "check-final",
            format!("rule `{}` still applies to ids {:?}", p.rules[f.rule].name, f.heads),
        ),
    }
}

/// Time-overlapping steps must have non-overlapping side effects.
pub fn audit_overlap(trace: &Trace) -> Verdict {
    match decompose_k(&trace.steps) {
        Ok(_) => Verdict::pass("audit-overlap"),
        Err(v) => Verdict::fail("audit-overlap", v.to_string()),
    }
}

/// Every check on a serialized trace. Finality is checked on the replayed
/// final state when the run reports `done`.
pub fn verify_trace_text(text: &str, goals0: &[Constraint], p: &Program) -> Vec<Verdict> {
    let trace = match Trace::parse(text, p) {
        Ok(t) => t,
        Err(e) => return vec![Verdict::fail("parse-trace", e.to_string())],
    };
    let mut out = Vec::new();
    match replay_inner(&trace, goals0, p) {
        Ok(r) => {
            out.push(Verdict::pass("replay"));
            if trace.status == Status::Done {
                let view = r.abstract_view();
                out.push(if is_final(&view, p) {
                    Verdict::pass("check-final")
                } else {
                    Verdict::fail("check-final", format!("replayed final store {} is not final", view.answer()))
                });
            }
        }
        Err(e) => out.push(Verdict::fail("replay", e)),
    }
    out.push(project_abstract(&trace, goals0, p));
    out.push(audit_overlap(&trace));
    out
}

/// Id-free final answer recorded in a trace, replayed independently.
pub fn replayed_answer(trace: &Trace, goals0: &[Constraint], p: &Program) -> Result<crate::abstract_engine::Answer, String> {
    let r = replay_inner(trace, goals0, p)?;
    Ok(canonical_answer(r.projection().iter().map(|(_, c)| c)))
}
