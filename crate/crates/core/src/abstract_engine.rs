//! Reference semantics: single rewrite steps over an id-free store,
//! exhaustive search for final stores, and the finality test.
//!
//! Store elements carry private tags so that a propagation history can tell
//! two copies of the same constraint apart. Tags never leak into answers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::ops::ControlFlow;

use rand::Rng;
use thiserror::Error;

use crate::store::Store;
use crate::syntax::Program;
use crate::term::{
    guard_holds, match_chr_into, mgu, ChrConstraint, Constraint, Equation, Substitution,
};

pub type Tag = u64;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbstractStore {
    items: BTreeMap<Tag, Constraint>,
    history: BTreeSet<(usize, Vec<Tag>)>,
    next: Tag,
}

/// One rule instance: rule index, matching and the tags bound to each head
/// position (propagated heads first).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Firing {
    pub rule: usize,
    pub phi: Substitution,
    pub heads: Vec<Tag>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteStep {
    pub firing: Firing,
    pub result: AbstractStore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LimitExceeded {
    #[error("state limit of {0} exceeded")]
    States(usize),
    #[error("depth limit of {0} exceeded")]
    Depth(usize),
    #[error("no final store within {0} steps")]
    Steps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_states: 200_000,
            max_depth: 200,
        }
    }
}

/// A store in canonical, comparable form: CHR constraints in normal form
/// under the store's equations, then the equations, all sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Answer(pub Vec<Constraint>);

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("}")
    }
}

pub fn canonical_answer<'a>(cs: impl IntoIterator<Item = &'a Constraint>) -> Answer {
    let cs: Vec<&Constraint> = cs.into_iter().collect();
    let eqs: Vec<&Equation> = cs
        .iter()
        .filter_map(|c| match c {
            Constraint::Eq(e) => Some(e),
            _ => None,
        })
        .collect();
    let theta = mgu(eqs.iter().copied()).unwrap_or_default();
    let mut out: Vec<Constraint> = cs
        .iter()
        .map(|c| match c {
            Constraint::Chr(c) => Constraint::Chr(theta.resolve_chr(c)),
            Constraint::Eq(e) => Constraint::Eq(e.clone()),
        })
        .collect();
    out.sort();
    Answer(out)
}

impl AbstractStore {
    pub fn new(cs: impl IntoIterator<Item = Constraint>) -> Self {
        Self::from_tagged(cs.into_iter().enumerate().map(|(i, c)| (i as Tag + 1, c)), [])
    }

    /// Builds a store with explicit tags and history. History entries that
    /// mention a missing tag are dropped.
    pub fn from_tagged(
        items: impl IntoIterator<Item = (Tag, Constraint)>,
        history: impl IntoIterator<Item = (usize, Vec<Tag>)>,
    ) -> Self {
        let items: BTreeMap<Tag, Constraint> = items.into_iter().collect();
        let next = items.keys().next_back().map_or(1, |t| t + 1);
        let history = history
            .into_iter()
            .filter(|(_, tags)| tags.iter().all(|t| items.contains_key(t)))
            .map(|(r, mut tags)| {
                tags.sort_unstable();
                (r, tags)
            })
            .collect();
        AbstractStore { items, history, next }
    }

    /// View of a goal-engine store: alive constraints tagged by id,
    /// equations tagged after the highest id.
    pub fn from_store(store: &Store, history: impl IntoIterator<Item = (usize, Vec<Tag>)>) -> Self {
        let base = store.next_id();
        let items = store
            .alive()
            .map(|(id, c)| (id, Constraint::Chr(c.clone())))
            .chain(
                store
                    .equations()
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (base + i as Tag, Constraint::Eq(e.clone()))),
            );
        Self::from_tagged(items, history)
    }

    pub fn items(&self) -> impl Iterator<Item = (Tag, &Constraint)> {
        self.items.iter().map(|(t, c)| (*t, c))
    }

    pub fn constraints(&self) -> impl Iterator<Item = &Constraint> {
        self.items.values()
    }

    pub fn get(&self, tag: Tag) -> Option<&Constraint> {
        self.items.get(&tag)
    }

    pub fn history(&self) -> &BTreeSet<(usize, Vec<Tag>)> {
        &self.history
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn equations(&self) -> impl Iterator<Item = &Equation> {
        self.items.values().filter_map(|c| match c {
            Constraint::Eq(e) => Some(e),
            _ => None,
        })
    }

    /// Solution of the equations, or `None` when they are unsatisfiable.
    pub fn theta(&self) -> Option<Substitution> {
        mgu(self.equations()).ok()
    }

    pub fn answer(&self) -> Answer {
        canonical_answer(self.items.values())
    }

    /// Adds a constraint under a fresh tag.
    pub fn push(&mut self, c: Constraint) -> Tag {
        let t = self.next;
        self.items.insert(t, c);
        self.next += 1;
        t
    }

    /// Memo key: constraints sorted, tags renumbered by that order.
    fn key(&self) -> (Vec<Constraint>, Vec<(usize, Vec<usize>)>) {
        let mut order: Vec<(&Constraint, Tag)> = self.items.iter().map(|(t, c)| (c, *t)).collect();
        order.sort();
        let rank: BTreeMap<Tag, usize> = order.iter().enumerate().map(|(i, (_, t))| (*t, i)).collect();
        let mut hist: Vec<(usize, Vec<usize>)> = self
            .history
            .iter()
            .map(|(r, tags)| {
                let mut v: Vec<usize> = tags.iter().map(|t| rank[t]).collect();
                v.sort_unstable();
                (*r, v)
            })
            .collect();
        hist.sort();
        (order.into_iter().map(|(c, _)| c.clone()).collect(), hist)
    }
}

/// Visits every applicable rule instance in a deterministic order.
fn search(s: &AbstractStore, p: &Program, visit: &mut dyn FnMut(Firing) -> ControlFlow<()>) -> ControlFlow<()> {
    let Some(theta) = s.theta() else {
        return ControlFlow::Continue(());
    };
    let chr: Vec<(Tag, ChrConstraint)> = s
        .items
        .iter()
        .filter_map(|(t, c)| c.as_chr().map(|c| (*t, theta.resolve_chr(c))))
        .collect();
    for (ri, rule) in p.rules.iter().enumerate() {
        let heads: Vec<&ChrConstraint> = rule.heads().map(|(_, h)| h).collect();
        let mut chosen = Vec::with_capacity(heads.len());
        let mut go = |phi: Substitution, chosen: &mut Vec<Tag>| -> ControlFlow<()> {
            if !guard_holds(&theta, &phi, &rule.guard) {
                return ControlFlow::Continue(());
            }
            if rule.is_propagation() {
                let mut key = chosen.clone();
                key.sort_unstable();
                if s.history.contains(&(ri, key)) {
                    return ControlFlow::Continue(());
                }
            }
            visit(Firing {
                rule: ri,
                phi,
                heads: chosen.clone(),
            })
        };
        assign(&heads, &chr, Substitution::new(), &mut chosen, &mut go)?;
    }
    ControlFlow::Continue(())
}

fn assign(
    heads: &[&ChrConstraint],
    chr: &[(Tag, ChrConstraint)],
    phi: Substitution,
    chosen: &mut Vec<Tag>,
    done: &mut dyn FnMut(Substitution, &mut Vec<Tag>) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let Some((h, rest)) = heads.split_first() else {
        return done(phi, chosen);
    };
    for (t, c) in chr {
        if chosen.contains(t) {
            continue;
        }
        let mut next = phi.clone();
        if match_chr_into(h, c, &mut next) {
            chosen.push(*t);
            let r = assign(rest, chr, next, chosen, done);
            chosen.pop();
            r?;
        }
    }
    ControlFlow::Continue(())
}

/// Every applicable rule instance.
pub fn firings(s: &AbstractStore, p: &Program) -> Vec<Firing> {
    let mut out = Vec::new();
    let _ = search(s, p, &mut |f| {
        out.push(f);
        ControlFlow::Continue(())
    });
    out
}

/// Some applicable rule instance, if any.
pub fn find_firing(s: &AbstractStore, p: &Program) -> Option<Firing> {
    let mut found = None;
    let _ = search(s, p, &mut |f| {
        found = Some(f);
        ControlFlow::Break(())
    });
    found
}

/// Result of firing an instance already known to apply.
fn fire(s: &AbstractStore, p: &Program, f: &Firing) -> AbstractStore {
    let rule = &p.rules[f.rule];
    let mut out = s.clone();
    let removed: HashSet<Tag> = f.heads[rule.propagated.len()..].iter().copied().collect();
    for t in &removed {
        out.items.remove(t);
    }
    if rule.is_propagation() {
        let mut key = f.heads.clone();
        key.sort_unstable();
        out.history.insert((f.rule, key));
    }
    if !removed.is_empty() {
        out.history.retain(|(_, tags)| tags.iter().all(|t| !removed.contains(t)));
    }
    for b in &rule.body {
        out.push(f.phi.resolve(b));
    }
    out
}

pub fn rewrite_steps(s: &AbstractStore, p: &Program) -> Vec<RewriteStep> {
    firings(s, p)
        .into_iter()
        .map(|f| RewriteStep {
            result: fire(s, p, &f),
            firing: f,
        })
        .collect()
}

pub fn is_final(s: &AbstractStore, p: &Program) -> bool {
    find_firing(s, p).is_none()
}

/// Fires a recorded instance after checking that it really applies: tags
/// present and distinct, heads match under `phi`, guard entailed, and the
/// propagation history permits it.
pub fn apply_instance(s: &AbstractStore, p: &Program, f: &Firing) -> Option<AbstractStore> {
    let rule = p.rules.get(f.rule)?;
    if f.heads.len() != rule.head_len() {
        return None;
    }
    let distinct: HashSet<Tag> = f.heads.iter().copied().collect();
    if distinct.len() != f.heads.len() {
        return None;
    }
    let theta = s.theta()?;
    let mut phi = Substitution::new();
    for (pos, t) in f.heads.iter().enumerate() {
        let c = theta.resolve_chr(s.get(*t)?.as_chr()?);
        if !match_chr_into(rule.head_at(pos), &c, &mut phi) {
            return None;
        }
    }
    if theta_restrict(&theta, &phi) != theta_restrict(&theta, &f.phi) {
        return None;
    }
    if !guard_holds(&theta, &phi, &rule.guard) {
        return None;
    }
    if rule.is_propagation() {
        let mut key = f.heads.clone();
        key.sort_unstable();
        if s.history.contains(&(f.rule, key)) {
            return None;
        }
    }
    Some(fire(s, p, &Firing { phi, ..f.clone() }))
}

fn theta_restrict(theta: &Substitution, phi: &Substitution) -> Substitution {
    phi.iter().map(|(v, t)| (v.clone(), theta.resolve_term(t))).collect()
}

/// All final stores reachable from `s`, as canonical answers.
///
/// Exceeding a limit makes the oracle unavailable for this input; it never
/// means "no answers".
pub fn final_stores(s: &AbstractStore, p: &Program, limits: Limits) -> Result<BTreeSet<Answer>, LimitExceeded> {
    let mut seen = HashSet::new();
    let mut answers = BTreeSet::new();
    explore(s, p, limits, 0, &mut seen, &mut answers)?;
    Ok(answers)
}

type Key = (Vec<Constraint>, Vec<(usize, Vec<usize>)>);

fn explore(
    s: &AbstractStore,
    p: &Program,
    limits: Limits,
    depth: usize,
    seen: &mut HashSet<Key>,
    answers: &mut BTreeSet<Answer>,
) -> Result<(), LimitExceeded> {
    if !seen.insert(s.key()) {
        return Ok(());
    }
    if seen.len() > limits.max_states {
        return Err(LimitExceeded::States(limits.max_states));
    }
    let fs = firings(s, p);
    if fs.is_empty() {
        answers.insert(s.answer());
        return Ok(());
    }
    if depth >= limits.max_depth {
        return Err(LimitExceeded::Depth(limits.max_depth));
    }
    for f in &fs {
        explore(&fire(s, p, f), p, limits, depth + 1, seen, answers)?;
    }
    Ok(())
}

/// Random walk to a final store. Returns the final store and the fired
/// instances in order.
pub fn run_random(
    s: &AbstractStore,
    p: &Program,
    rng: &mut impl Rng,
    max_steps: usize,
) -> Result<(AbstractStore, Vec<Firing>), LimitExceeded> {
    let mut cur = s.clone();
    let mut log = Vec::new();
    for _ in 0..=max_steps {
        let mut fs = firings(&cur, p);
        if fs.is_empty() {
            return Ok((cur, log));
        }
        let f = fs.swap_remove(rng.gen_range(0..fs.len()));
        cur = fire(&cur, p, &f);
        log.push(f);
    }
    Err(LimitExceeded::Steps(max_steps))
}

/// Can two derivations from `s`, simplifying `hs1` and `hs2`, be composed?
/// Holds iff their simplified parts fit into `s` side by side.
pub fn concurrent_compose_check(s: &[Constraint], hs1: &[Constraint], hs2: &[Constraint]) -> bool {
    let mut avail: BTreeMap<&Constraint, usize> = BTreeMap::new();
    for c in s {
        *avail.entry(c).or_default() += 1;
    }
    hs1.iter().chain(hs2).all(|c| match avail.get_mut(c) {
        Some(n) if *n > 0 => {
            *n -= 1;
            true
        }
        _ => false,
    })
}
