//! Per-occurrence join plans and partner search.

use std::collections::{BTreeMap, BTreeSet};

use crate::store::{Id, NumberedConstraint, Store};
use crate::syntax::{Program, Role};
use crate::term::{guard_holds, match_chr_into, Op, Substitution, Symbol, Term, Var};

/// How to complete a rule head once the active constraint sits at
/// `active`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPlan {
    pub rule: usize,
    pub active: usize,
    /// Remaining head positions in lookup order.
    pub order: Vec<usize>,
    /// `guards[k]` holds the guard conjuncts whose variables are all bound
    /// once the active head and the first `k` partners are matched.
    pub guards: Vec<Vec<Term>>,
}

fn conjuncts(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::App(Op::And, l, r) => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        Term::Const(crate::term::Value::Bool(true)) => {}
        _ => out.push(t.clone()),
    }
}

fn vars_of_term(t: &Term) -> BTreeSet<Var> {
    let mut vs = BTreeSet::new();
    t.collect_vars(&mut vs);
    vs
}

impl JoinPlan {
    /// Greedy order: prefer a head whose first argument is already ground
    /// (so the index applies), otherwise textual order.
    pub fn compile(p: &Program, rule: usize, active: usize) -> JoinPlan {
        let r = &p.rules[rule];
        let mut bound = BTreeSet::new();
        r.head_at(active).collect_vars(&mut bound);
        let mut remaining: Vec<usize> = (0..r.head_len()).filter(|&i| i != active).collect();
        let mut order = Vec::new();
        let mut bound_after = vec![bound.clone()];
        while !remaining.is_empty() {
            let keyed = remaining.iter().position(|&i| {
                r.head_at(i)
                    .args
                    .first()
                    .is_some_and(|a| vars_of_term(a).is_subset(&bound))
            });
            let next = remaining.remove(keyed.unwrap_or(0));
            r.head_at(next).collect_vars(&mut bound);
            order.push(next);
            bound_after.push(bound.clone());
        }
        let mut cs = Vec::new();
        conjuncts(&r.guard, &mut cs);
        let mut guards = vec![Vec::new(); order.len() + 1];
        for c in cs {
            let vs = vars_of_term(&c);
            let k = bound_after
                .iter()
                .position(|b| vs.is_subset(b))
                .unwrap_or(order.len());
            guards[k].push(c);
        }
        JoinPlan {
            rule,
            active,
            order,
            guards,
        }
    }
}

/// A complete, guard-satisfying rule-head instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub rule: usize,
    /// Role of the active constraint in this instance.
    pub role: Role,
    pub phi: Substitution,
    /// Ids per head position, propagated heads first.
    pub heads: Vec<Id>,
}

impl Instance {
    pub fn propagated<'a>(&'a self, p: &Program) -> &'a [Id] {
        &self.heads[..p.rules[self.rule].propagated.len()]
    }

    pub fn simplified<'a>(&'a self, p: &Program) -> &'a [Id] {
        &self.heads[p.rules[self.rule].propagated.len()..]
    }

    pub fn sorted_ids(&self) -> Vec<Id> {
        let mut v = self.heads.clone();
        v.sort_unstable();
        v
    }
}

/// Compiled join plans for every predicate occurrence, in occurrence order.
#[derive(Debug, Clone)]
pub struct Matcher {
    plans: BTreeMap<Symbol, Vec<JoinPlan>>,
}

impl Matcher {
    pub fn new(p: &Program) -> Matcher {
        let plans = p
            .occurrences
            .iter()
            .map(|(pred, occs)| {
                let ps = occs
                    .iter()
                    .map(|o| JoinPlan::compile(p, o.rule, p.rules[o.rule].position(o.role, o.index)))
                    .collect();
                (pred.clone(), ps)
            })
            .collect();
        Matcher { plans }
    }

    pub fn plans_for(&self, pred: &str) -> &[JoinPlan] {
        self.plans.get(pred).map(Vec::as_slice).unwrap_or(&[])
    }

    /// First instance for active constraint `g`, trying occurrences top to
    /// bottom and partners in ascending id order. Instances of pure
    /// propagation rules for which `fired` holds are skipped.
    pub fn find(
        &self,
        p: &Program,
        store: &Store,
        g: &NumberedConstraint,
        fired: &dyn Fn(usize, &[Id]) -> bool,
    ) -> Option<Instance> {
        let theta = store.theta();
        for plan in self.plans_for(&g.constraint.pred) {
            let rule = &p.rules[plan.rule];
            let mut phi = Substitution::new();
            if !match_chr_into(rule.head_at(plan.active), &g.constraint, &mut phi) {
                continue;
            }
            if !plan.guards[0].iter().all(|c| guard_holds(theta, &phi, c)) {
                continue;
            }
            let mut heads = vec![0; rule.head_len()];
            heads[plan.active] = g.id;
            let mut search = Search {
                p,
                store,
                plan,
                theta,
                fired,
                heads,
            };
            if let Some(inst) = search.extend(0, phi) {
                return Some(inst);
            }
        }
        None
    }
}

struct Search<'a> {
    p: &'a Program,
    store: &'a Store,
    plan: &'a JoinPlan,
    theta: &'a Substitution,
    fired: &'a dyn Fn(usize, &[Id]) -> bool,
    heads: Vec<Id>,
}

impl Search<'_> {
    fn extend(&mut self, k: usize, phi: Substitution) -> Option<Instance> {
        let rule = &self.p.rules[self.plan.rule];
        if k == self.plan.order.len() {
            if rule.is_propagation() {
                let mut ids = self.heads.clone();
                ids.sort_unstable();
                if (self.fired)(self.plan.rule, &ids) {
                    return None;
                }
            }
            return Some(Instance {
                rule: self.plan.rule,
                role: rule.role_at(self.plan.active),
                phi,
                heads: self.heads.clone(),
            });
        }
        let pos = self.plan.order[k];
        let pattern = rule.head_at(pos);
        let taken = &self.heads;
        let candidates: Vec<(Id, Substitution)> = self
            .store
            .candidates(pattern, &phi)
            .filter(|(id, _)| !taken.contains(id))
            .filter_map(|(id, c)| {
                let mut s = phi.clone();
                (match_chr_into(pattern, c, &mut s)
                    && self.plan.guards[k + 1].iter().all(|g| guard_holds(self.theta, &s, g)))
                .then_some((id, s))
            })
            .collect();
        for (id, s) in candidates {
            self.heads[pos] = id;
            if let Some(inst) = self.extend(k + 1, s) {
                return Some(inst);
            }
        }
        self.heads[pos] = 0;
        None
    }
}
