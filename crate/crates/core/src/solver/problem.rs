use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::condexp::RegressionBasis;
use crate::error::{Error, Result};
use crate::modulus::ModulusFunction;
use crate::norms::NormReport;
use crate::paths::{CoefficientProcess, PathEnsemble};
use crate::process::AdaptedProcess;
use crate::truncation::truncate_qr;

use super::generator::{Generator, TruncatedGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Explicit,
    #[default]
    Implicit,
}

/// Damped fixed-point settings of the implicit step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerIteration {
    pub damping: f64,
    pub max_iterations: usize,
    /// Converged when `|Δy|_∞ <= rel_tol · (1 + |y|_∞)`.
    pub rel_tol: f64,
}

impl Default for InnerIteration {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iterations: 50,
            rel_tol: 1e-12,
        }
    }
}

/// Structural coefficient processes declared with a problem.
#[derive(Debug, Clone, Default)]
pub struct Coefficients {
    pub u: Option<Arc<CoefficientProcess>>,
    pub v: Option<Arc<CoefficientProcess>>,
    pub gamma: Option<Arc<CoefficientProcess>>,
    pub g1: Option<Arc<AdaptedProcess>>,
    pub g2: Option<Arc<AdaptedProcess>>,
}

impl Coefficients {
    pub fn any_declared(&self) -> bool {
        self.u.is_some()
            || self.v.is_some()
            || self.gamma.is_some()
            || self.g1.is_some()
            || self.g2.is_some()
    }
}

/// `y_t = ξ + ∫_t^T g(s, y_s, z_s) ds − ∫_t^T z_s dB_s` on a path ensemble.
#[derive(Clone)]
pub struct BsdeProblem {
    pub generator: Arc<dyn Generator>,
    /// `ξ`, `(path, component)` row-major.
    pub terminal: Vec<f64>,
    pub ensemble: Arc<PathEnsemble>,
    pub coefficients: Coefficients,
    pub alpha: Option<f64>,
    pub p_bar: Option<f64>,
    pub barrier: Option<f64>,
    /// Declared modulus `ρ` of the one-sided condition in `y`.
    pub modulus: Option<ModulusFunction>,
    pub basis: RegressionBasis,
    pub mode: StepMode,
    pub inner: InnerIteration,
}

impl BsdeProblem {
    pub fn new(
        generator: Arc<dyn Generator>,
        terminal: Vec<f64>,
        ensemble: Arc<PathEnsemble>,
    ) -> Result<Self> {
        let k = generator.k();
        if generator.d() != ensemble.dim() {
            return Err(Error::Argument(format!(
                "generator expects d = {}, ensemble has d = {}",
                generator.d(),
                ensemble.dim()
            )));
        }
        if k == 0 || terminal.len() != ensemble.paths() * k {
            return Err(Error::Argument(format!(
                "terminal condition has {} values, expected {} paths x k = {k}",
                terminal.len(),
                ensemble.paths()
            )));
        }
        if terminal.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("terminal condition must be finite".into()));
        }
        Ok(Self {
            generator,
            terminal,
            ensemble,
            coefficients: Coefficients::default(),
            alpha: None,
            p_bar: None,
            barrier: None,
            modulus: None,
            basis: RegressionBasis::default(),
            mode: StepMode::Implicit,
            inner: InnerIteration::default(),
        })
    }

    /// Terminal condition as a function of the terminal Brownian state.
    pub fn with_terminal_fn(
        generator: Arc<dyn Generator>,
        ensemble: Arc<PathEnsemble>,
        xi: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self> {
        let k = generator.k();
        let n = ensemble.steps();
        let mut terminal = vec![0.0; ensemble.paths() * k];
        for (p, out) in terminal.chunks_mut(k).enumerate() {
            xi(ensemble.position(p, n), out);
        }
        Self::new(generator, terminal, ensemble)
    }

    pub fn with_coefficients(mut self, coefficients: Coefficients) -> Result<Self> {
        let m = self.ensemble.paths();
        let grid = self.ensemble.grid();
        for c in [&coefficients.u, &coefficients.v, &coefficients.gamma]
            .into_iter()
            .flatten()
        {
            if c.paths() != m || c.process.grid() != grid {
                return Err(Error::Argument("coefficient process does not match the ensemble".into()));
            }
            if !c.audit().passed() {
                return Err(Error::Domain(
                    "coefficient process fails its pathwise integral audit".into(),
                ));
            }
        }
        for g in [&coefficients.g1, &coefficients.g2].into_iter().flatten() {
            if g.paths() != m || g.grid() != grid || g.values().iter().any(|x| *x < 0.0) {
                return Err(Error::Argument("g1/g2 must be nonnegative processes on the ensemble".into()));
            }
        }
        self.basis.running_functionals = coefficients.any_declared();
        self.coefficients = coefficients;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: StepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_basis(mut self, basis: RegressionBasis) -> Self {
        self.basis = basis;
        self
    }

    pub fn k(&self) -> usize {
        self.generator.k()
    }

    pub fn d(&self) -> usize {
        self.generator.d()
    }

    pub fn paths(&self) -> usize {
        self.ensemble.paths()
    }

    pub fn terminal_at(&self, path: usize) -> &[f64] {
        let k = self.k();
        &self.terminal[path * k..(path + 1) * k]
    }

    /// Same problem with another driver.
    pub fn with_generator(&self, generator: Arc<dyn Generator>) -> Self {
        let mut p = self.clone();
        p.generator = generator;
        p
    }
}

/// `(ξⁿ, gⁿ)` with `ξⁿ = q_n(ξ)` and `gⁿ` the truncated driver.
pub fn truncation_ladder(problem: &BsdeProblem, n: usize) -> Result<(Vec<f64>, TruncatedGenerator)> {
    if n == 0 {
        return Err(Error::Argument("truncation level must be at least 1".into()));
    }
    let k = problem.k();
    let mut xi = Vec::with_capacity(problem.terminal.len());
    for chunk in problem.terminal.chunks(k) {
        xi.extend(truncate_qr(chunk, n as f64)?);
    }
    Ok((xi, TruncatedGenerator::new(Arc::clone(&problem.generator), n as f64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderAudit {
    pub level: usize,
    pub terminal_max: f64,
    pub terminal_ok: bool,
    pub free_term_max_ratio: f64,
    pub free_term_ok: bool,
    pub samples: usize,
}

/// Zero-tolerance check of `|ξⁿ| <= n` and `|gⁿ(t,0,0)| <= n e^{−t}` on every
/// path and step.
pub fn audit_truncation_ladder(problem: &BsdeProblem, n: usize) -> Result<LadderAudit> {
    let (xi, gn) = truncation_ladder(problem, n)?;
    let k = problem.k();
    let level = n as f64;
    let mut terminal_max: f64 = 0.0;
    let mut terminal_ok = true;
    for c in xi.chunks(k) {
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        terminal_max = terminal_max.max(norm);
        terminal_ok &= norm <= level;
    }
    let grid = problem.ensemble.grid();
    let zero_y = vec![0.0; k];
    let zero_z = vec![0.0; k * problem.d()];
    let mut out = vec![0.0; k];
    let mut ratio: f64 = 0.0;
    let mut free_ok = true;
    for p in 0..problem.paths() {
        for i in 0..=grid.steps() {
            let t = grid.time(i);
            gn.eval(p, i, t, &zero_y, &zero_z, &mut out);
            let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = gn.radius(t);
            free_ok &= norm <= r;
            ratio = ratio.max(norm / r);
        }
    }
    Ok(LadderAudit {
        level: n,
        terminal_max,
        terminal_ok,
        free_term_max_ratio: ratio,
        free_term_ok: free_ok,
        samples: problem.paths() * (grid.steps() + 1),
    })
}

/// Solution of a discretized BSDE.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub y: AdaptedProcess,
    /// `k × d` per node, flattened row-major; the terminal node is zero.
    pub z: AdaptedProcess,
    pub norms: NormReport,
    pub steps: Vec<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    /// Largest residual RMS among the `E[y_{i+1}]` targets.
    pub expectation_residual: f64,
    /// Largest residual RMS among the `z` targets.
    pub z_residual: f64,
    pub condition: f64,
    pub inner_iterations: usize,
}
