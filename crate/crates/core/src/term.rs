//! Terms, constraints and substitutions.
//!
//! Rule heads are matched one-way against stored constraints: only rule
//! variables get bound, store variables are never narrowed. Equations in the
//! store are solved by syntactic unification with occurs check. Every
//! function symbol of the term language is an interpreted operator, so ground
//! applications are evaluated eagerly ("normalized") wherever terms are built.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Interned-ish name used for predicates, variables and atoms.
pub type Symbol = Arc<str>;

/// A logical variable.
///
/// Rule variables carry the index of the rule they belong to, which keeps
/// them apart from store variables (`scope == None`) and from variables of
/// other rules without changing their printed name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub name: Symbol,
    pub scope: Option<u32>,
}

impl Var {
    /// A store (goal) variable.
    pub fn free(name: &str) -> Self {
        Var {
            name: name.into(),
            scope: None,
        }
    }

    pub fn scoped(name: &str, rule: u32) -> Self {
        Var {
            name: name.into(),
            scope: Some(rule),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    /// Symbolic atom, totally ordered lexicographically.
    Atom(Symbol),
}

/// Built-in binary operators. All of them have arity two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
}

impl Op {
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Or => "||",
            Op::And => "&&",
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
        }
    }

    /// Binding strength used by the parser and the printer.
    pub fn precedence(self) -> u8 {
        match self {
            Op::Or => 1,
            Op::And => 2,
            Op::Eq | Op::Ne | Op::Lt | Op::Le | Op::Gt | Op::Ge => 3,
            Op::Add | Op::Sub => 4,
            Op::Mul => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    Const(Value),
    App(Op, Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("cannot evaluate non-ground term `{0}`")]
    NonGround(Term),
    #[error("operator `{op}` is not defined on {lhs} and {rhs}")]
    TypeMismatch { op: &'static str, lhs: Value, rhs: Value },
    #[error("integer overflow in `{0}`")]
    Overflow(Term),
}

impl Term {
    pub fn var(name: &str) -> Self {
        Term::Var(Var::free(name))
    }

    pub fn int(n: i64) -> Self {
        Term::Const(Value::Int(n))
    }

    pub fn bool(b: bool) -> Self {
        Term::Const(Value::Bool(b))
    }

    pub fn atom(name: &str) -> Self {
        Term::Const(Value::Atom(name.into()))
    }

    pub fn app(op: Op, lhs: Term, rhs: Term) -> Self {
        Term::App(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Const(_) => true,
            Term::App(_, l, r) => l.is_ground() && r.is_ground(),
        }
    }

    pub fn occurs(&self, v: &Var) -> bool {
        match self {
            Term::Var(x) => x == v,
            Term::Const(_) => false,
            Term::App(_, l, r) => l.occurs(v) || r.occurs(v),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Const(_) => {}
            Term::App(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Evaluates a ground term.
    pub fn eval(&self) -> Result<Value, EvalError> {
        match self {
            Term::Var(_) => Err(EvalError::NonGround(self.clone())),
            Term::Const(v) => Ok(v.clone()),
            Term::App(op, l, r) => {
                let lv = l.eval()?;
                // && and || still require boolean operands on both sides.
                let rv = r.eval()?;
                apply_op(*op, lv.clone(), rv.clone()).map_err(|e| match e {
                    OpError::Overflow => EvalError::Overflow(self.clone()),
                    OpError::Type => EvalError::TypeMismatch {
                        op: op.symbol(),
                        lhs: lv,
                        rhs: rv,
                    },
                })
            }
        }
    }

    /// Replaces every ground application that evaluates successfully by its
    /// value. Applications that fail to evaluate are kept as terms.
    pub fn normalize(&self) -> Term {
        match self {
            Term::Var(_) | Term::Const(_) => self.clone(),
            Term::App(op, l, r) => {
                let l = l.normalize();
                let r = r.normalize();
                if let (Term::Const(lv), Term::Const(rv)) = (&l, &r) {
                    if let Ok(v) = apply_op(*op, lv.clone(), rv.clone()) {
                        return Term::Const(v);
                    }
                }
                Term::app(*op, l, r)
            }
        }
    }
}

enum OpError {
    Type,
    Overflow,
}

fn apply_op(op: Op, l: Value, r: Value) -> Result<Value, OpError> {
    use Value::*;
    let v = match (op, l, r) {
        (Op::Add, Int(a), Int(b)) => Int(a.checked_add(b).ok_or(OpError::Overflow)?),
        (Op::Sub, Int(a), Int(b)) => Int(a.checked_sub(b).ok_or(OpError::Overflow)?),
        (Op::Mul, Int(a), Int(b)) => Int(a.checked_mul(b).ok_or(OpError::Overflow)?),
        (Op::And, Bool(a), Bool(b)) => Bool(a && b),
        (Op::Or, Bool(a), Bool(b)) => Bool(a || b),
        (Op::Eq, a, b) if same_kind(&a, &b) => Bool(a == b),
        (Op::Ne, a, b) if same_kind(&a, &b) => Bool(a != b),
        (cmp @ (Op::Lt | Op::Le | Op::Gt | Op::Ge), a, b) => {
            let ord = match (&a, &b) {
                (Int(x), Int(y)) => x.cmp(y),
                (Atom(x), Atom(y)) => x.cmp(y),
                _ => return Err(OpError::Type),
            };
            Bool(match cmp {
                Op::Lt => ord.is_lt(),
                Op::Le => ord.is_le(),
                Op::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
        _ => return Err(OpError::Type),
    };
    Ok(v)
}

fn same_kind(a: &Value, b: &Value) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

/// Evaluates a ground term with the standard integer/boolean semantics.
pub fn eval_ground(t: &Term) -> Result<Value, EvalError> {
    t.eval()
}

/// A user-defined (CHR) constraint `Pred(args)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChrConstraint {
    pub pred: Symbol,
    pub args: Vec<Term>,
}

impl ChrConstraint {
    pub fn new(pred: &str, args: Vec<Term>) -> Self {
        ChrConstraint {
            pred: pred.into(),
            args,
        }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        for a in &self.args {
            a.collect_vars(out);
        }
    }

    pub fn normalize(&self) -> Self {
        ChrConstraint {
            pred: self.pred.clone(),
            args: self.args.iter().map(Term::normalize).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Equation {
    pub lhs: Term,
    pub rhs: Term,
}

impl Equation {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        Equation { lhs, rhs }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Chr(ChrConstraint),
    Eq(Equation),
}

impl Constraint {
    pub fn as_chr(&self) -> Option<&ChrConstraint> {
        match self {
            Constraint::Chr(c) => Some(c),
            Constraint::Eq(_) => None,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Constraint::Chr(c) => c.collect_vars(out),
            Constraint::Eq(e) => {
                e.lhs.collect_vars(out);
                e.rhs.collect_vars(out);
            }
        }
    }
}

impl From<ChrConstraint> for Constraint {
    fn from(c: ChrConstraint) -> Self {
        Constraint::Chr(c)
    }
}

impl From<Equation> for Constraint {
    fn from(e: Equation) -> Self {
        Constraint::Eq(e)
    }
}

/// Finite map from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    bindings: BTreeMap<Var, Term>,
}

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.bindings.get(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.bindings.iter()
    }

    /// Adds a binding. Identity bindings `x ↦ x` are dropped.
    pub fn bind(&mut self, v: Var, t: Term) {
        if t == Term::Var(v.clone()) {
            return;
        }
        self.bindings.insert(v, t);
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(x) => self.bindings.get(x).cloned().unwrap_or_else(|| t.clone()),
            Term::Const(_) => t.clone(),
            Term::App(op, l, r) => Term::app(*op, self.apply_term(l), self.apply_term(r)),
        }
    }

    pub fn apply_chr(&self, c: &ChrConstraint) -> ChrConstraint {
        ChrConstraint {
            pred: c.pred.clone(),
            args: c.args.iter().map(|a| self.apply_term(a)).collect(),
        }
    }

    pub fn apply(&self, c: &Constraint) -> Constraint {
        match c {
            Constraint::Chr(c) => Constraint::Chr(self.apply_chr(c)),
            Constraint::Eq(e) => Constraint::Eq(Equation::new(
                self.apply_term(&e.lhs),
                self.apply_term(&e.rhs),
            )),
        }
    }

    /// Applies the substitution and evaluates ground subterms.
    pub fn resolve_term(&self, t: &Term) -> Term {
        self.apply_term(t).normalize()
    }

    pub fn resolve_chr(&self, c: &ChrConstraint) -> ChrConstraint {
        ChrConstraint {
            pred: c.pred.clone(),
            args: c.args.iter().map(|a| self.resolve_term(a)).collect(),
        }
    }

    pub fn resolve(&self, c: &Constraint) -> Constraint {
        match c {
            Constraint::Chr(c) => Constraint::Chr(self.resolve_chr(c)),
            Constraint::Eq(e) => Constraint::Eq(Equation::new(
                self.resolve_term(&e.lhs),
                self.resolve_term(&e.rhs),
            )),
        }
    }
}

impl FromIterator<(Var, Term)> for Substitution {
    fn from_iter<I: IntoIterator<Item = (Var, Term)>>(iter: I) -> Self {
        let mut s = Substitution::new();
        for (v, t) in iter {
            s.bind(v, t);
        }
        s
    }
}

/// Applies a substitution to a term or constraint without evaluating.
pub fn apply_subst(s: &Substitution, c: &Constraint) -> Constraint {
    s.apply(c)
}

fn match_term(pattern: &Term, cand: &Term, s: &mut Substitution) -> bool {
    match pattern {
        Term::Var(x) => match s.get(x) {
            Some(bound) => bound == cand,
            None => {
                s.bindings.insert(x.clone(), cand.clone());
                true
            }
        },
        Term::Const(_) => pattern == cand,
        Term::App(op, pl, pr) => match cand {
            Term::App(cop, cl, cr) if cop == op => {
                match_term(pl, cl, s) && match_term(pr, cr, s)
            }
            _ => false,
        },
    }
}

/// One-way matching of a head pattern against a stored constraint.
///
/// Extends `seed` with bindings for pattern variables only. Pattern and
/// candidate variables live in disjoint namespaces.
pub fn match_chr(
    pattern: &ChrConstraint,
    candidate: &ChrConstraint,
    seed: &Substitution,
) -> Option<Substitution> {
    let mut s = seed.clone();
    match_chr_into(pattern, candidate, &mut s).then_some(s)
}

/// Like [`match_chr`] but extends `s` in place. On failure `s` may hold
/// partial bindings and must be discarded.
pub fn match_chr_into(pattern: &ChrConstraint, candidate: &ChrConstraint, s: &mut Substitution) -> bool {
    pattern.pred == candidate.pred
        && pattern.args.len() == candidate.args.len()
        && pattern
            .args
            .iter()
            .zip(&candidate.args)
            .all(|(p, c)| match_term(p, c, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("equation store is inconsistent")]
pub struct Inconsistent;

/// Incremental solver for a set of equations.
///
/// Bindings are kept fully resolved, so the substitution is idempotent.
/// An equation between a non-ground operator application and a non-variable
/// term has no syntactic solution yet; it is suspended until its variables
/// are bound, which keeps the result independent of insertion order.
#[derive(Clone, Debug, Default)]
pub struct Unifier {
    bindings: Substitution,
    suspended: Vec<Equation>,
}

impl Unifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn substitution(&self) -> &Substitution {
        &self.bindings
    }

    /// Equations still waiting for their variables to become bound.
    pub fn suspended(&self) -> &[Equation] {
        &self.suspended
    }

    pub fn add(&mut self, eq: &Equation) -> Result<(), Inconsistent> {
        let mut work = vec![eq.clone()];
        while let Some(e) = work.pop() {
            let lhs = self.bindings.resolve_term(&e.lhs);
            let rhs = self.bindings.resolve_term(&e.rhs);
            if lhs == rhs {
                continue;
            }
            match (lhs, rhs) {
                (Term::Var(x), t) | (t, Term::Var(x)) => {
                    if t.occurs(&x) {
                        return Err(Inconsistent);
                    }
                    self.bind(x, t);
                    // New binding may wake suspended equations.
                    work.append(&mut self.suspended);
                }
                (l, r) if l.is_ground() && r.is_ground() => return Err(Inconsistent),
                (l, r) => self.suspended.push(Equation::new(l, r)),
            }
        }
        Ok(())
    }

    fn bind(&mut self, x: Var, t: Term) {
        let single: Substitution = std::iter::once((x.clone(), t.clone())).collect();
        for v in self.bindings.bindings.values_mut() {
            if v.occurs(&x) {
                *v = single.resolve_term(v);
            }
        }
        self.bindings.bind(x, t);
    }
}

/// Most general unifier of a set of equations.
pub fn mgu<'a>(eqs: impl IntoIterator<Item = &'a Equation>) -> Result<Substitution, Inconsistent> {
    let mut u = Unifier::new();
    for e in eqs {
        u.add(e)?;
    }
    Ok(u.bindings)
}

/// Does `theta(phi(guard))` evaluate to `true`? Non-ground or ill-typed
/// guards are not entailed.
pub fn guard_holds(theta: &Substitution, phi: &Substitution, guard: &Term) -> bool {
    let g = theta.resolve_term(&phi.apply_term(guard));
    matches!(g, Term::Const(Value::Bool(true)))
}

/// Guard entailment by a set of equations. `Err` signals that the equations
/// themselves are unsatisfiable; callers treat that as "not entailed".
pub fn entails(eqs: &[Equation], phi: &Substitution, guard: &Term) -> Result<bool, Inconsistent> {
    let theta = mgu(eqs)?;
    Ok(guard_holds(&theta, phi, guard))
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Atom(a) => write!(f, "'{a}'"),
        }
    }
}

impl Term {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(Value::Int(n)) if *n < 0 && min > 0 => write!(f, "({n})"),
            Term::Const(v) => write!(f, "{v}"),
            Term::App(op, l, r) => {
                let p = op.precedence();
                let paren = p < min;
                if paren {
                    f.write_str("(")?;
                }
                // Left-associative: the right operand needs a strictly
                // tighter binding.
                l.fmt_prec(f, p)?;
                f.write_str(op.symbol())?;
                r.fmt_prec(f, p + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl fmt::Display for ChrConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, a) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.lhs, self.rhs)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Chr(c) => write!(f, "{c}"),
            Constraint::Eq(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}->{t}")?;
        }
        f.write_str("}")
    }
}
