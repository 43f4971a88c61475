//! Inequality rows shared by the verification suites.

use std::fmt;

/// One checked inequality `lhs ≤ constant · rhs · (1 + slack)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub quantity: String,
    /// Space the norms were taken in, when there is one.
    pub space: Option<String>,
    /// Derived per-trial seed for rows that use a model sample.
    pub seed: Option<u64>,
    pub lhs: f64,
    pub rhs: f64,
    pub constant: f64,
    pub slack: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(quantity: impl Into<String>, lhs: f64, rhs: f64, constant: f64, slack: f64) -> Self {
        let pass = holds(lhs, rhs, constant, slack);
        Self { quantity: quantity.into(), space: None, seed: None, lhs, rhs, constant, slack, pass }
    }

    pub fn in_space(mut self, space: impl fmt::Display) -> Self {
        self.space = Some(space.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// A row that could not be evaluated.
    pub fn failed(quantity: impl Into<String>) -> Self {
        Self {
            quantity: quantity.into(),
            space: None,
            seed: None,
            lhs: f64::NAN,
            rhs: f64::NAN,
            constant: f64::NAN,
            slack: 0.0,
            pass: false,
        }
    }

    /// `constant · rhs · (1 + slack) − lhs`; non-negative exactly when the row passes.
    pub fn margin(&self) -> f64 {
        self.constant * self.rhs * (1.0 + self.slack) - self.lhs
    }
}

pub fn holds(lhs: f64, rhs: f64, constant: f64, slack: f64) -> bool {
    lhs <= constant * rhs * (1.0 + slack)
}

pub fn all_pass(rows: &[CheckRow]) -> bool {
    rows.iter().all(|r| r.pass)
}
