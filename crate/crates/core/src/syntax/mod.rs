//! CHR programs: rules, validation and per-predicate occurrence tables.
//!
//! Concrete syntax (ASCII):
//!
//! ```text
//! gcd1 @ Gcd(0) <=> true.
//! gcd2 @ Gcd(n) \ Gcd(m) <=> m>=n && n>0 | Gcd(m-n).
//! r1   @ P ==> Q.
//! ```
//!
//! Predicates start with an uppercase letter, variables with a lowercase
//! one, symbolic atoms are single-quoted (`'a'`). `%` starts a line comment.

mod parser;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::term::{ChrConstraint, Constraint, Symbol, Term, Value, Var};

pub use parser::{parse_constraint, parse_goals, parse_program, parse_term};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("{line}:{col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("duplicate rule name `{0}`")]
    DuplicateRule(String),
    #[error("rule `{0}` has an empty head")]
    EmptyHead(String),
    #[error("rule `{rule}`: variable `{var}` does not occur in the head")]
    UnboundVariable { rule: String, var: String },
}

/// Whether a head constraint is kept or removed when the rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Propagated,
    Simplified,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Propagated => "propagated",
            Role::Simplified => "simplified",
        })
    }
}

/// `name @ propagated \ simplified <=> guard | body`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub propagated: Vec<ChrConstraint>,
    pub simplified: Vec<ChrConstraint>,
    pub guard: Term,
    pub body: Vec<Constraint>,
}

impl Rule {
    pub fn head_len(&self) -> usize {
        self.propagated.len() + self.simplified.len()
    }

    /// Head constraints in position order: propagated heads first.
    pub fn heads(&self) -> impl Iterator<Item = (Role, &ChrConstraint)> {
        self.propagated
            .iter()
            .map(|h| (Role::Propagated, h))
            .chain(self.simplified.iter().map(|h| (Role::Simplified, h)))
    }

    /// Position of an occurrence in [`Rule::heads`] order.
    pub fn position(&self, role: Role, index: usize) -> usize {
        match role {
            Role::Propagated => index,
            Role::Simplified => self.propagated.len() + index,
        }
    }

    pub fn role_at(&self, position: usize) -> Role {
        if position < self.propagated.len() {
            Role::Propagated
        } else {
            Role::Simplified
        }
    }

    pub fn head_at(&self, position: usize) -> &ChrConstraint {
        if position < self.propagated.len() {
            &self.propagated[position]
        } else {
            &self.simplified[position - self.propagated.len()]
        }
    }

    /// Pure propagation rules are the only ones subject to the propagation
    /// history.
    pub fn is_propagation(&self) -> bool {
        self.simplified.is_empty()
    }

    pub fn head_vars(&self) -> BTreeSet<Var> {
        let mut vs = BTreeSet::new();
        for (_, h) in self.heads() {
            h.collect_vars(&mut vs);
        }
        vs
    }

    fn rescope(&mut self, scope: u32) {
        fn term(t: &mut Term, scope: u32) {
            match t {
                Term::Var(v) => v.scope = Some(scope),
                Term::Const(_) => {}
                Term::App(_, l, r) => {
                    term(l, scope);
                    term(r, scope);
                }
            }
        }
        for h in self.propagated.iter_mut().chain(self.simplified.iter_mut()) {
            h.args.iter_mut().for_each(|a| term(a, scope));
            *h = h.normalize();
        }
        term(&mut self.guard, scope);
        for b in &mut self.body {
            match b {
                Constraint::Chr(c) => c.args.iter_mut().for_each(|a| term(a, scope)),
                Constraint::Eq(e) => {
                    term(&mut e.lhs, scope);
                    term(&mut e.rhs, scope);
                }
            }
        }
    }
}

/// One place where a predicate occurs in a rule head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occurrence {
    pub rule: usize,
    pub role: Role,
    /// Index within the rule's propagated or simplified head list.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub occurrences: BTreeMap<Symbol, Vec<Occurrence>>,
}

impl Program {
    /// Validates the rules, renames their variables apart and compiles the
    /// occurrence table.
    pub fn new(mut rules: Vec<Rule>) -> Result<Program, LoadError> {
        let mut names = HashSet::new();
        for (i, r) in rules.iter_mut().enumerate() {
            if !names.insert(r.name.clone()) {
                return Err(LoadError::DuplicateRule(r.name.clone()));
            }
            if r.head_len() == 0 {
                return Err(LoadError::EmptyHead(r.name.clone()));
            }
            let bound = r.head_vars();
            let mut used = BTreeSet::new();
            r.guard.collect_vars(&mut used);
            for b in &r.body {
                b.collect_vars(&mut used);
            }
            if let Some(v) = used.difference(&bound).next() {
                return Err(LoadError::UnboundVariable {
                    rule: r.name.clone(),
                    var: v.name.to_string(),
                });
            }
            r.rescope(i as u32);
        }
        let mut p = Program {
            rules,
            occurrences: BTreeMap::new(),
        };
        compile_occurrences(&mut p);
        Ok(p)
    }

    pub fn rule(&self, name: &str) -> Option<(usize, &Rule)> {
        self.rules.iter().enumerate().find(|(_, r)| r.name == name)
    }

    pub fn occurrences_of(&self, pred: &str) -> &[Occurrence] {
        self.occurrences.get(pred).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Fills the occurrence table: rule order first, then head position
/// (propagated heads before simplified ones).
pub fn compile_occurrences(p: &mut Program) {
    p.occurrences.clear();
    for (ri, rule) in p.rules.iter().enumerate() {
        for (index, h) in rule.propagated.iter().enumerate() {
            p.occurrences.entry(h.pred.clone()).or_default().push(Occurrence {
                rule: ri,
                role: Role::Propagated,
                index,
            });
        }
        for (index, h) in rule.simplified.iter().enumerate() {
            p.occurrences.entry(h.pred.clone()).or_default().push(Occurrence {
                rule: ri,
                role: Role::Simplified,
                index,
            });
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, xs: &[T]) -> fmt::Result {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @ ", self.name)?;
        let arrow = if self.simplified.is_empty() {
            write_list(f, &self.propagated)?;
            "==>"
        } else if self.propagated.is_empty() {
            write_list(f, &self.simplified)?;
            "<=>"
        } else {
            write_list(f, &self.propagated)?;
            f.write_str(" \\ ")?;
            write_list(f, &self.simplified)?;
            "<=>"
        };
        write!(f, " {arrow} ")?;
        if self.guard != Term::Const(Value::Bool(true)) {
            write!(f, "{} | ", self.guard)?;
        }
        if self.body.is_empty() {
            f.write_str("true")?;
        } else {
            write_list(f, &self.body)?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
