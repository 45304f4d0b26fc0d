//! Pass/fail checks with their defects, shared by the verifiers and the CLI.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// passes iff defect ≤ tolerance
    AtMost,
    /// passes iff defect ≥ tolerance
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub defect: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub kind: CheckKind,
}

impl Check {
    pub fn at_most(name: impl Into<String>, defect: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            defect,
            tolerance,
            pass: defect <= tolerance,
            kind: CheckKind::AtMost,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            defect: value,
            tolerance: bound,
            pass: value >= bound,
            kind: CheckKind::AtLeast,
        }
    }

    /// A boolean condition reported as defect 0 (holds) or 1 (fails).
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_most(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }
}

/// Ordered list of checks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckList {
    pub checks: Vec<Check>,
}

impl CheckList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: CheckList) {
        self.checks.extend(other.checks);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}
