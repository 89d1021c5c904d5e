//! Bundled example programs with default goals.
//!
//! Each source carries its default goals on a `% goals:` comment line.

use crate::syntax::{parse_goals, parse_program, Program};
use crate::term::Constraint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub name: &'static str,
    pub source: &'static str,
}

impl Example {
    pub fn program(&self) -> Program {
        parse_program(self.source).expect("bundled program parses")
    }

    pub fn goals_text(&self) -> &'static str {
        goals_line(self.source).unwrap_or("")
    }

    pub fn goals(&self) -> Vec<Constraint> {
        parse_goals(self.goals_text()).expect("bundled goals parse")
    }
}

/// The text after `% goals:` in a program source, if present.
pub fn goals_line(source: &str) -> Option<&str> {
    source
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("% goals:"))
        .map(str::trim)
}

macro_rules! example {
    ($name:literal) => {
        Example {
            name: $name,
            source: include_str!(concat!("../corpus/", $name, ".chr")),
        }
    };
}

const ALL: &[Example] = &[
    example!("gcd"),
    example!("get"),
    example!("merge"),
    example!("store_on_drop"),
    example!("split_store"),
    example!("single_step"),
    example!("lazy"),
    example!("index"),
    example!("late_storage"),
    example!("continuation"),
    example!("wakeup"),
];

pub const EMPTY: Example = example!("empty");

/// Every bundled program that has rules and goals.
pub fn all() -> &'static [Example] {
    ALL
}

pub fn get(name: &str) -> Option<Example> {
    ALL.iter().chain([&EMPTY]).find(|e| e.name == name).copied()
}
