use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoViolationFound,
    Violated,
    Inconclusive,
}

/// A sampled point where an inequality failed, with everything needed to
/// re-evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub index: usize,
    pub seed: u64,
    pub path: usize,
    pub step: usize,
    pub t: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` over all samples.
    pub worst_margin: f64,
    pub witness: Option<Witness>,
    /// Estimated constants and audit values; essential sups are empirical
    /// maxima over paths.
    pub constants: BTreeMap<String, f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    pub fn new(assumption: impl Into<String>) -> Self {
        Self {
            assumption: assumption.into(),
            samples: 0,
            violations: 0,
            worst_margin: f64::NEG_INFINITY,
            witness: None,
            constants: BTreeMap::new(),
            verdict: Verdict::NoViolationFound,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::NoViolationFound
    }

    pub(crate) fn constant(&mut self, key: impl Into<String>, value: f64) {
        self.constants.insert(key.into(), value);
    }

    pub(crate) fn finish(&mut self) {
        if self.violations > 0 {
            self.verdict = Verdict::Violated;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub inequality: String,
    /// `(path, node)` pairs examined.
    pub points: usize,
    /// Points where the hypothesis holds within tolerance.
    pub hypothesis_holds: usize,
    pub max_hypothesis_residual: f64,
    /// Largest conclusion residual among points where the hypothesis holds.
    pub max_conclusion_residual: f64,
    pub conclusion_violations: usize,
    /// Largest `μ / bound` over points with a positive bound.
    pub max_conclusion_ratio: f64,
    /// Bound constant at `t = 0`, e.g. `exp(max_paths ∫₀ᵀ β ds)`.
    pub bound_constant: f64,
    pub constants: BTreeMap<String, f64>,
    pub passed: bool,
    pub notes: Vec<String>,
}
