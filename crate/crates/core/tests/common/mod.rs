//! Random terminating programs for property and fuzz tests.
//!
//! Every rule removes at least one head. Its body either holds fewer CHR
//! constraints than the rule removes, or exactly one constraint whose
//! argument is a removed head's argument minus a positive constant, with a
//! guard keeping it non-negative. The pair (number of CHR constraints, sum
//! of arguments) therefore drops lexicographically with every firing.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

pub const PREDS: [&str; 3] = ["P", "Q", "R"];

#[derive(Debug, Clone)]
pub struct Generated {
    pub program: String,
    pub goals: String,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_rules: usize,
    pub max_heads: usize,
    pub max_goals: usize,
    /// Allow variable goal arguments and goal equations binding them.
    pub logical_vars: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_rules: 4,
            max_heads: 3,
            max_goals: 8,
            logical_vars: false,
        }
    }
}

fn head_arg(rng: &mut impl Rng, vars: &mut Vec<String>) -> String {
    let roll = rng.gen_range(0..100);
    if roll < 10 {
        rng.gen_range(0..=5).to_string()
    } else if roll < 25 && !vars.is_empty() {
        vars.choose(rng).unwrap().clone()
    } else {
        let v = format!("x{}", vars.len() + 1);
        vars.push(v.clone());
        v
    }
}

fn random_rule(rng: &mut impl Rng, name: usize, shape: Shape) -> String {
    let n_heads = rng.gen_range(1..=shape.max_heads);
    let n_simp = rng.gen_range(1..=n_heads);
    let n_prop = n_heads - n_simp;
    let mut vars = Vec::new();
    let mut heads = Vec::new();
    for _ in 0..n_heads {
        let pred = PREDS.choose(rng).unwrap();
        let arg = head_arg(rng, &mut vars);
        heads.push((pred.to_string(), arg));
    }
    let render = |hs: &[(String, String)]| hs.iter().map(|(p, a)| format!("{p}({a})")).collect::<Vec<_>>().join(", ");
    let (prop, simp) = heads.split_at(n_prop);
    let mut guards = Vec::new();
    if vars.len() >= 2 && rng.gen_bool(0.4) {
        let a = vars.choose(rng).unwrap();
        let b = vars.choose(rng).unwrap();
        if a != b {
            let op = ["<", "!=", "<="].choose(rng).unwrap();
            guards.push(format!("{a} {op} {b}"));
        }
    }
    if !vars.is_empty() && rng.gen_bool(0.2) {
        let a = vars.choose(rng).unwrap();
        guards.push(format!("{a} > {}", rng.gen_range(0..3)));
    }
    let body = if rng.gen_bool(0.5) {
        let (_, arg) = simp.choose(rng).unwrap();
        let k = rng.gen_range(1..=2);
        guards.push(format!("{arg} >= {k}"));
        format!("{}({arg} - {k})", PREDS.choose(rng).unwrap())
    } else {
        let n = rng.gen_range(0..n_simp);
        let mut parts: Vec<String> = (0..n)
            .map(|_| {
                let arg = if vars.is_empty() || rng.gen_bool(0.2) {
                    rng.gen_range(0..=5).to_string()
                } else {
                    vars.choose(rng).unwrap().clone()
                };
                format!("{}({arg})", PREDS.choose(rng).unwrap())
            })
            .collect();
        if parts.is_empty() {
            parts.push("true".into());
        }
        parts.join(", ")
    };
    let guard = if guards.is_empty() {
        String::new()
    } else {
        format!("{} | ", guards.join(" && "))
    };
    let head = if prop.is_empty() {
        render(simp)
    } else {
        format!("{} \\ {}", render(prop), render(simp))
    };
    format!("r{name} @ {head} <=> {guard}{body}.")
}

pub fn random_case(rng: &mut impl Rng, shape: Shape) -> Generated {
    let n_rules = rng.gen_range(1..=shape.max_rules);
    let program = (0..n_rules)
        .map(|i| random_rule(rng, i + 1, shape))
        .collect::<Vec<_>>()
        .join("\n");
    let n_goals = rng.gen_range(2.min(shape.max_goals)..=shape.max_goals);
    let mut goals: Vec<String> = Vec::new();
    let mut used_vars = Vec::new();
    for _ in 0..n_goals {
        let pred = PREDS.choose(rng).unwrap();
        if shape.logical_vars && rng.gen_bool(0.25) {
            let v = ["a", "b"].choose(rng).unwrap().to_string();
            goals.push(format!("{pred}({v})"));
            used_vars.push(v);
        } else {
            goals.push(format!("{pred}({})", rng.gen_range(0..=5)));
        }
    }
    used_vars.sort();
    used_vars.dedup();
    for v in used_vars {
        if rng.gen_bool(0.8) {
            let at = rng.gen_range(0..=goals.len());
            goals.insert(at, format!("{v} = {}", rng.gen_range(0..=5)));
        }
    }
    Generated {
        program,
        goals: goals.join(", "),
    }
}
