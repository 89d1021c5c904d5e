//! Derivation traces and their line format.
//!
//! ```text
//! # chr-trace engine=sequential workers=1
//! 1 activate goal=Get(x1)#1 delta={}\{}
//! 6 simplify rule=get goal=Put(1)#3 heads=[1,3] phi={x->x1,y->1} delta={}\{1,3}
//! # status done
//! #final x1=1
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::store::{Goal, Id, NumberedConstraint};
use crate::syntax::{parse_constraint, parse_term, Program};
use crate::term::{Constraint, Substitution, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    Solve,
    Activate,
    Simplify,
    Propagate,
    Drop,
}

impl StepKind {
    pub fn is_firing(self) -> bool {
        matches!(self, StepKind::Simplify | StepKind::Propagate)
    }

    fn as_str(self) -> &'static str {
        match self {
            StepKind::Solve => "solve",
            StepKind::Activate => "activate",
            StepKind::Simplify => "simplify",
            StepKind::Propagate => "propagate",
            StepKind::Drop => "drop",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepKind {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        Ok(match s {
            "solve" => StepKind::Solve,
            "activate" => StepKind::Activate,
            "simplify" => StepKind::Simplify,
            "propagate" => StepKind::Propagate,
            "drop" => StepKind::Drop,
            _ => return Err(TraceError::msg(format!("unknown step kind `{s}`"))),
        })
    }
}

/// `δ = propagated \ simplified`, as sets of ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SideEffect {
    pub propagated: BTreeSet<Id>,
    pub simplified: BTreeSet<Id>,
}

impl SideEffect {
    pub fn is_empty(&self) -> bool {
        self.propagated.is_empty() && self.simplified.is_empty()
    }

    /// Neither side simplifies anything the other one touches.
    pub fn non_overlapping(&self, other: &SideEffect) -> bool {
        let touches = |d: &SideEffect, id: &Id| d.propagated.contains(id) || d.simplified.contains(id);
        !self.simplified.iter().any(|id| touches(other, id))
            && !other.simplified.iter().any(|id| touches(self, id))
    }

    /// Composition of two non-overlapping side effects.
    pub fn compose(&self, other: &SideEffect) -> SideEffect {
        SideEffect {
            propagated: self.propagated.union(&other.propagated).copied().collect(),
            simplified: self.simplified.union(&other.simplified).copied().collect(),
        }
    }
}

fn write_ids(f: &mut fmt::Formatter<'_>, ids: impl IntoIterator<Item = Id>, open: &str, close: &str) -> fmt::Result {
    f.write_str(open)?;
    for (i, id) in ids.into_iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{id}")?;
    }
    f.write_str(close)
}

impl fmt::Display for SideEffect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_ids(f, self.propagated.iter().copied(), "{", "}")?;
        f.write_str("\\")?;
        write_ids(f, self.simplified.iter().copied(), "{", "}")
    }
}

/// Execution metadata recorded by the concurrent engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Exec {
    pub worker: usize,
    /// Logical time at which the step started reading the store.
    pub start: u64,
    /// Logical time at which the step became visible.
    pub commit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub seq: u64,
    pub kind: StepKind,
    /// Equation for Solve, `c#i` for the others. For Activate the
    /// constraint is the goal as it was before numbering.
    pub goal: Goal,
    pub rule: Option<String>,
    pub phi: Option<Substitution>,
    /// Ids bound to each head position, propagated heads first.
    pub heads: Vec<Id>,
    pub delta: SideEffect,
    pub exec: Option<Exec>,
}

impl TraceStep {
    pub fn new(kind: StepKind, goal: Goal) -> Self {
        TraceStep {
            seq: 0,
            kind,
            goal,
            rule: None,
            phi: None,
            heads: Vec::new(),
            delta: SideEffect::default(),
            exec: None,
        }
    }

    /// Id of the numbered goal, if any.
    pub fn goal_id(&self) -> Option<Id> {
        match &self.goal {
            Goal::Numbered(nc) => Some(nc.id),
            _ => None,
        }
    }
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.seq, self.kind)?;
        if let Some(r) = &self.rule {
            write!(f, " rule={r}")?;
        }
        write!(f, " goal={}", self.goal)?;
        if self.kind.is_firing() {
            write_ids(f, self.heads.iter().copied(), " heads=[", "]")?;
        }
        if let Some(phi) = &self.phi {
            write!(f, " phi={phi}")?;
        }
        write!(f, " delta={}", self.delta)?;
        if let Some(e) = &self.exec {
            write!(f, " worker={} interval=[{},{}]", e.worker, e.start, e.commit)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Done,
    Failed,
    StepLimit,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Done => "done",
            Status::Failed => "failed",
            Status::StepLimit => "step-limit",
        })
    }
}

impl FromStr for Status {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        Ok(match s {
            "done" => Status::Done,
            "failed" => Status::Failed,
            "step-limit" => Status::StepLimit,
            _ => return Err(TraceError::msg(format!("unknown status `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub engine: String,
    pub workers: usize,
    pub seed: Option<u64>,
    pub steps: Vec<TraceStep>,
    pub status: Status,
    /// Store dump of the final state.
    pub final_dump: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceError {
    pub line: usize,
    pub message: String,
}

impl TraceError {
    fn msg(message: String) -> Self {
        TraceError { line: 0, message }
    }
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = format!("# chr-trace engine={} workers={}", self.engine, self.workers);
        if let Some(s) = self.seed {
            out.push_str(&format!(" seed={s}"));
        }
        out.push('\n');
        for s in &self.steps {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out.push_str(&format!("# status {}\n", self.status));
        for l in self.final_dump.lines() {
            out.push_str("#final ");
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    /// Parses the text form. Rule variables in `phi` are resolved against
    /// `program`.
    pub fn parse(text: &str, program: &Program) -> Result<Trace, TraceError> {
        let mut trace = Trace {
            engine: String::new(),
            workers: 1,
            seed: None,
            steps: Vec::new(),
            status: Status::Done,
            final_dump: String::new(),
        };
        let mut saw_header = false;
        for (n, line) in text.lines().enumerate() {
            let at = |e: TraceError| TraceError { line: n + 1, ..e };
            if let Some(rest) = line.strip_prefix("# chr-trace") {
                saw_header = true;
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| at(TraceError::msg(format!("bad header field `{kv}`"))))?;
                    match k {
                        "engine" => trace.engine = v.to_string(),
                        "workers" => trace.workers = num(v).map_err(at)? as usize,
                        "seed" => trace.seed = Some(num(v).map_err(at)?),
                        _ => {}
                    }
                }
            } else if let Some(rest) = line.strip_prefix("# status ") {
                trace.status = rest.trim().parse().map_err(at)?;
            } else if let Some(rest) = line.strip_prefix("#final ") {
                trace.final_dump.push_str(rest);
                trace.final_dump.push('\n');
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else {
                trace.steps.push(parse_step(line, program).map_err(at)?);
            }
        }
        if !saw_header {
            return Err(TraceError {
                line: 1,
                message: "missing `# chr-trace` header".into(),
            });
        }
        Ok(trace)
    }
}

fn num(s: &str) -> Result<u64, TraceError> {
    s.parse().map_err(|_| TraceError::msg(format!("expected a number, found `{s}`")))
}

fn ids(s: &str, open: char, close: char) -> Result<Vec<Id>, TraceError> {
    let inner = s
        .strip_prefix(open)
        .and_then(|r| r.strip_suffix(close))
        .ok_or_else(|| TraceError::msg(format!("malformed id list `{s}`")))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(num).collect()
}

fn parse_goal(s: &str) -> Result<Goal, TraceError> {
    let bad = |e: crate::syntax::LoadError| TraceError::msg(format!("goal `{s}`: {e}"));
    if let Some((c, id)) = s.rsplit_once('#') {
        let id = num(id)?;
        match parse_constraint(c).map_err(bad)? {
            Constraint::Chr(constraint) => Ok(Goal::Numbered(NumberedConstraint { id, constraint })),
            Constraint::Eq(_) => Err(TraceError::msg(format!("numbered equation `{s}`"))),
        }
    } else {
        Ok(Goal::from(parse_constraint(s).map_err(bad)?))
    }
}

fn parse_phi(s: &str, scope: Option<u32>) -> Result<Substitution, TraceError> {
    let inner = s
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| TraceError::msg(format!("malformed substitution `{s}`")))?;
    let mut out = Substitution::new();
    if inner.is_empty() {
        return Ok(out);
    }
    for binding in inner.split(',') {
        let (v, t) = binding
            .split_once("->")
            .ok_or_else(|| TraceError::msg(format!("malformed binding `{binding}`")))?;
        let var = match scope {
            Some(r) => Var::scoped(v, r),
            None => Var::free(v),
        };
        let term = parse_term(t).map_err(|e| TraceError::msg(format!("binding `{binding}`: {e}")))?;
        out.bind(var, term);
    }
    Ok(out)
}

fn parse_step(line: &str, program: &Program) -> Result<TraceStep, TraceError> {
    let mut fields = line.split_whitespace();
    let seq = num(fields.next().unwrap_or_default())?;
    let kind: StepKind = fields
        .next()
        .ok_or_else(|| TraceError::msg("missing step kind".into()))?
        .parse()?;
    let mut step = TraceStep::new(kind, Goal::Chr(crate::term::ChrConstraint::new("_", vec![])));
    step.seq = seq;
    let mut saw_goal = false;
    let mut phi_text = None;
    let mut worker = None;
    for kv in fields {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| TraceError::msg(format!("malformed field `{kv}`")))?;
        match k {
            "rule" => step.rule = Some(v.to_string()),
            "goal" => {
                step.goal = parse_goal(v)?;
                saw_goal = true;
            }
            "heads" => step.heads = ids(v, '[', ']')?,
            "phi" => phi_text = Some(v),
            "delta" => {
                let (p, s) = v
                    .split_once('\\')
                    .ok_or_else(|| TraceError::msg(format!("malformed delta `{v}`")))?;
                step.delta.propagated = ids(p, '{', '}')?.into_iter().collect();
                step.delta.simplified = ids(s, '{', '}')?.into_iter().collect();
            }
            "worker" => worker = Some(num(v)? as usize),
            "interval" => {
                let iv = ids(v, '[', ']')?;
                let [start, commit] = iv[..] else {
                    return Err(TraceError::msg(format!("malformed interval `{v}`")));
                };
                step.exec = Some(Exec {
                    worker: worker.unwrap_or(0),
                    start,
                    commit,
                });
            }
            _ => return Err(TraceError::msg(format!("unknown field `{k}`"))),
        }
    }
    if !saw_goal {
        return Err(TraceError::msg("missing goal".into()));
    }
    if let Some(text) = phi_text {
        let scope = match &step.rule {
            Some(name) => Some(
                program
                    .rule(name)
                    .ok_or_else(|| TraceError::msg(format!("unknown rule `{name}`")))?
                    .0 as u32,
            ),
            None => None,
        };
        step.phi = Some(parse_phi(text, scope)?);
    }
    Ok(step)
}
