//! The identified constraint store and goal multiset.
//!
//! Stored CHR constraints are kept in normal form with respect to the
//! current solution of the equation substore. Killed entries are tombstoned:
//! their ids stay reserved and lookups skip them.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::term::{ChrConstraint, Constraint, Equation, Inconsistent, Substitution, Symbol, Term, Unifier};

/// Identifier of a numbered constraint. Ids start at 1 and are never reused.
pub type Id = u64;

/// `c#i`: a stored CHR constraint with its unique identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NumberedConstraint {
    pub id: Id,
    pub constraint: ChrConstraint,
}

impl fmt::Display for NumberedConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.constraint, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("constraint #{0} is not alive")]
pub struct DeadId(pub Id);

#[derive(Debug, Clone)]
struct Entry {
    current: ChrConstraint,
    key: Option<Term>,
    alive: bool,
}

#[derive(Debug, Clone, Default)]
struct Bucket {
    ids: Vec<Id>,
    dead: usize,
}

impl Bucket {
    fn insert(&mut self, id: Id) {
        match self.ids.last() {
            Some(&last) if last > id => {
                let at = self.ids.partition_point(|&x| x < id);
                self.ids.insert(at, id);
            }
            _ => self.ids.push(id),
        }
    }
}

/// Result of a wake-up computation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WakeUp {
    pub woken: Vec<NumberedConstraint>,
    pub inconsistent: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Store {
    entries: Vec<Entry>,
    by_pred: HashMap<Symbol, Bucket>,
    /// Index on the first argument, for entries whose first argument is ground.
    by_key: HashMap<(Symbol, Term), Bucket>,
    nonground: BTreeSet<Id>,
    eqs: Vec<Equation>,
    unifier: Unifier,
    inconsistent: bool,
}

fn first_key(c: &ChrConstraint) -> Option<Term> {
    c.args.first().filter(|a| a.is_ground()).cloned()
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Next id to be handed out by [`Store::insert`].
    pub fn next_id(&self) -> Id {
        self.entries.len() as Id + 1
    }

    /// Current solution of the equation substore.
    pub fn theta(&self) -> &Substitution {
        self.unifier.substitution()
    }

    pub fn equations(&self) -> &[Equation] {
        &self.eqs
    }

    pub fn is_inconsistent(&self) -> bool {
        self.inconsistent
    }

    pub fn is_alive(&self, id: Id) -> bool {
        self.entry(id).is_some_and(|e| e.alive)
    }

    fn entry(&self, id: Id) -> Option<&Entry> {
        id.checked_sub(1).and_then(|i| self.entries.get(i as usize))
    }

    pub fn get(&self, id: Id) -> Option<NumberedConstraint> {
        self.entry(id).filter(|e| e.alive).map(|e| NumberedConstraint {
            id,
            constraint: e.current.clone(),
        })
    }

    /// Normal form of an alive constraint.
    pub fn current(&self, id: Id) -> Option<&ChrConstraint> {
        self.entry(id).filter(|e| e.alive).map(|e| &e.current)
    }

    pub fn len(&self) -> usize {
        self.alive().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Alive numbered constraints in ascending id order.
    pub fn alive(&self) -> impl Iterator<Item = (Id, &ChrConstraint)> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.alive)
            .map(|(i, e)| (i as Id + 1, &e.current))
    }

    /// Adds `c` under a fresh id.
    pub fn insert(&mut self, c: &ChrConstraint) -> NumberedConstraint {
        let id = self.next_id();
        let current = self.theta().resolve_chr(c);
        let key = first_key(&current);
        self.by_pred.entry(current.pred.clone()).or_default().insert(id);
        if let Some(k) = &key {
            self.by_key.entry((current.pred.clone(), k.clone())).or_default().insert(id);
        }
        if !current.is_ground() {
            self.nonground.insert(id);
        }
        self.entries.push(Entry {
            current: current.clone(),
            key,
            alive: true,
        });
        NumberedConstraint { id, constraint: current }
    }

    /// Stores `c` under an id chosen by the caller. Skipped ids are left
    /// as tombstones. Fails if `id` is below [`Store::next_id`].
    pub fn insert_numbered(&mut self, id: Id, c: &ChrConstraint) -> Result<NumberedConstraint, DeadId> {
        if id < self.next_id() {
            return Err(DeadId(id));
        }
        while self.next_id() < id {
            let filler = self.insert(&ChrConstraint::new("_", vec![]));
            self.kill(&[filler.id]).expect("fresh id");
        }
        Ok(self.insert(c))
    }

    /// Marks all `ids` dead. Nothing changes if any of them is already dead.
    pub fn kill(&mut self, ids: &[Id]) -> Result<(), DeadId> {
        if let Some(&id) = ids.iter().find(|&&id| !self.is_alive(id)) {
            return Err(DeadId(id));
        }
        for &id in ids {
            let e = &mut self.entries[id as usize - 1];
            e.alive = false;
            self.nonground.remove(&id);
            let pred = e.current.pred.clone();
            let key = e.key.clone();
            self.note_dead(pred.clone(), None);
            if let Some(k) = key {
                self.note_dead(pred, Some(k));
            }
        }
        Ok(())
    }

    fn note_dead(&mut self, pred: Symbol, key: Option<Term>) {
        let entries = &self.entries;
        let bucket = match key {
            Some(k) => self.by_key.get_mut(&(pred, k)),
            None => self.by_pred.get_mut(&pred),
        };
        if let Some(b) = bucket {
            b.dead += 1;
            if b.ids.len() > 32 && b.dead * 2 > b.ids.len() {
                b.ids.retain(|&id| entries[id as usize - 1].alive);
                b.dead = 0;
            }
        }
    }

    /// Alive constraints that may match `pattern` once `partial` is applied.
    ///
    /// Uses the first-argument index when that argument is ground under
    /// `partial`, otherwise scans all constraints of the predicate. Yields
    /// ascending ids, each at most once.
    pub fn candidates<'a>(
        &'a self,
        pattern: &ChrConstraint,
        partial: &Substitution,
    ) -> impl Iterator<Item = (Id, &'a ChrConstraint)> + 'a {
        let key = pattern
            .args
            .first()
            .map(|a| partial.resolve_term(a))
            .filter(Term::is_ground);
        let bucket = match key {
            Some(k) => self.by_key.get(&(pattern.pred.clone(), k)),
            None => self.by_pred.get(&pattern.pred),
        };
        bucket
            .map(|b| b.ids.as_slice())
            .unwrap_or(&[])
            .iter()
            .filter_map(move |&id| {
                let e = &self.entries[id as usize - 1];
                e.alive.then_some((id, &e.current))
            })
    }

    /// Constraints whose normal form would change if `e` were added.
    pub fn wake_up(&self, e: &Equation) -> WakeUp {
        let mut next = self.unifier.clone();
        if next.add(e).is_err() {
            return WakeUp {
                woken: Vec::new(),
                inconsistent: true,
            };
        }
        WakeUp {
            woken: self.changed_under(next.substitution()),
            inconsistent: false,
        }
    }

    fn changed_under(&self, theta: &Substitution) -> Vec<NumberedConstraint> {
        self.nonground
            .iter()
            .filter_map(|&id| {
                let e = &self.entries[id as usize - 1];
                let next = theta.resolve_chr(&e.current);
                (next != e.current).then_some(NumberedConstraint { id, constraint: next })
            })
            .collect()
    }

    /// Adds an equation and renormalizes the affected constraints.
    ///
    /// Returns the woken constraints (in their new normal form). When the
    /// equations become unsatisfiable the equation is still recorded, the
    /// store is flagged and nothing is woken.
    pub fn add_equation(&mut self, e: &Equation) -> Result<Vec<NumberedConstraint>, Inconsistent> {
        self.eqs.push(e.clone());
        if self.inconsistent {
            return Err(Inconsistent);
        }
        let mut next = self.unifier.clone();
        if next.add(e).is_err() {
            self.inconsistent = true;
            return Err(Inconsistent);
        }
        let woken = self.changed_under(next.substitution());
        self.unifier = next;
        for nc in &woken {
            self.reindex(nc);
        }
        Ok(woken)
    }

    fn reindex(&mut self, nc: &NumberedConstraint) {
        let id = nc.id;
        let e = &mut self.entries[id as usize - 1];
        let old_key = e.key.take();
        e.current = nc.constraint.clone();
        e.key = first_key(&e.current);
        let new_key = e.key.clone();
        if nc.constraint.is_ground() {
            self.nonground.remove(&id);
        }
        if old_key != new_key {
            let pred = nc.constraint.pred.clone();
            if let Some(k) = old_key {
                if let Some(b) = self.by_key.get_mut(&(pred.clone(), k)) {
                    b.ids.retain(|&x| x != id);
                }
            }
            if let Some(k) = new_key {
                self.by_key.entry((pred, k)).or_default().insert(id);
            }
        }
    }

    /// `{c | c#i alive} ⊎ eqs`, constraints in id order.
    pub fn drop_ids(&self) -> Vec<Constraint> {
        self.alive()
            .map(|(_, c)| Constraint::Chr(c.clone()))
            .chain(self.eqs.iter().cloned().map(Constraint::Eq))
            .collect()
    }

    /// One line per stored constraint: numbered constraints by id, then
    /// equations in lexicographic order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, c) in self.alive() {
            out.push_str(&format!("{c}#{id}\n"));
        }
        let mut eqs: Vec<String> = self.eqs.iter().map(ToString::to_string).collect();
        eqs.sort();
        for e in eqs {
            out.push_str(&e);
            out.push('\n');
        }
        out
    }
}

/// A goal: an equation, an inactive CHR constraint or an active numbered one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Goal {
    Eq(Equation),
    Chr(ChrConstraint),
    Numbered(NumberedConstraint),
}

impl From<Constraint> for Goal {
    fn from(c: Constraint) -> Self {
        match c {
            Constraint::Chr(c) => Goal::Chr(c),
            Constraint::Eq(e) => Goal::Eq(e),
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Eq(e) => write!(f, "{e}"),
            Goal::Chr(c) => write!(f, "{c}"),
            Goal::Numbered(nc) => write!(f, "{nc}"),
        }
    }
}

/// `⟨G, Sn⟩`
#[derive(Debug, Clone, Default)]
pub struct State {
    pub goals: VecDeque<Goal>,
    pub store: Store,
}

impl State {
    /// Initial state: all constraints are goals, the store is empty.
    pub fn initial(goals: impl IntoIterator<Item = Constraint>) -> Self {
        State {
            goals: goals.into_iter().map(Goal::from).collect(),
            store: Store::new(),
        }
    }
}
