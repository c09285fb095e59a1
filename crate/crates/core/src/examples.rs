//! The two worked examples with stochastic coefficients, closed-form oracle
//! problems, and a registry of named problem definitions.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulus::ModulusFunction;
use crate::paths::{truncated_coefficient, CoefficientProcess, PathEnsemble};
use crate::process::AdaptedProcess;
use crate::solver::{BsdeProblem, Coefficients, FnGenerator, Generator};
use crate::truncation::truncate_qr;

/// `e^{-2}`
pub const DEFAULT_DELTA: f64 = 0.1353352832366127;
pub const DEFAULT_TERMINAL_RADIUS: f64 = 5.0;
/// Largest exponent passed to `exp` by the second example's driver.
pub const EXPONENT_CLAMP: f64 = 30.0;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_delta(delta: f64, upper: f64) -> Result<()> {
    if delta > 0.0 && delta < upper {
        Ok(())
    } else {
        Err(Error::Argument(format!("delta must lie in (0, {upper}), got {delta}")))
    }
}

/// `x|ln x|` on `(0, δ]`, extended linearly with slope `|ln δ| − 1` beyond `δ`.
pub fn h_osgood(x: f64, delta: f64) -> Result<f64> {
    check_delta(delta, (-1.0f64).exp())?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("h is defined for x >= 0, got {x}")));
    }
    Ok(h_unchecked(x, delta))
}

/// Same formula with the indicator convention `h(x) = 0` for `x <= 0`.
#[inline]
fn h_unchecked(x: f64, delta: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= delta {
        -x * x.ln()
    } else {
        let l = -delta.ln();
        (l - 1.0) * (x - delta) + delta * l
    }
}

/// `x|ln x|^{1/p}` on `(0, δ]` with its `C¹` linear extension beyond `δ`.
pub fn hbar_osgood(x: f64, delta: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Argument(format!("p must exceed 1, got {p}")));
    }
    check_delta(delta, (-1.0 / p).exp())?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("hbar is defined for x >= 0, got {x}")));
    }
    Ok(hbar_unchecked(x, delta, p))
}

#[inline]
fn hbar_unchecked(x: f64, delta: f64, p: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= delta {
        x * (-x.ln()).powf(1.0 / p)
    } else {
        let l = -delta.ln();
        let slope = l.powf(1.0 / p) - l.powf(1.0 / p - 1.0) / p;
        slope * (x - delta) + delta * l.powf(1.0 / p)
    }
}

pub fn h_modulus(delta: f64) -> Result<ModulusFunction> {
    check_delta(delta, (-1.0f64).exp())?;
    Ok(ModulusFunction::new(format!("h(delta={delta})"), move |x| h_unchecked(x, delta)))
}

pub fn hbar_modulus(delta: f64, p: f64) -> Result<ModulusFunction> {
    hbar_osgood(0.0, delta, p)?;
    Ok(ModulusFunction::new(format!("hbar(delta={delta}, p={p})"), move |x| {
        hbar_unchecked(x, delta, p)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleId {
    Example1,
    Example2,
    OracleMartingale,
    OracleExponential,
    OracleDrift,
    /// Driver `2 v̄_t |z|` declared with Lipschitz coefficient `v̄`.
    BrokenZLipschitz,
}

impl ExampleId {
    pub const ALL: [ExampleId; 6] = [
        ExampleId::Example1,
        ExampleId::Example2,
        ExampleId::OracleMartingale,
        ExampleId::OracleExponential,
        ExampleId::OracleDrift,
        ExampleId::BrokenZLipschitz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::Example1 => "example1",
            ExampleId::Example2 => "example2",
            ExampleId::OracleMartingale => "oracle-martingale",
            ExampleId::OracleExponential => "oracle-exponential",
            ExampleId::OracleDrift => "oracle-drift",
            ExampleId::BrokenZLipschitz => "broken-z-lipschitz",
        }
    }

    pub fn is_oracle(self) -> bool {
        matches!(
            self,
            ExampleId::OracleMartingale | ExampleId::OracleExponential | ExampleId::OracleDrift
        )
    }
}

/// How `ξ` is read off the terminal Brownian state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerminalSelector {
    /// `q_R((B_T^{a mod d})_a)`
    ClippedVector { radius: f64 },
    /// `q_R(B_T^1)·(1, …, 1)`
    ClippedScalar { radius: f64 },
    /// `(B_T^{a mod d})_a`
    Brownian,
    /// `value·(1, …, 1)`
    Constant { value: f64 },
}

impl TerminalSelector {
    pub fn evaluate(&self, b: &[f64], out: &mut [f64]) -> Result<()> {
        let d = b.len();
        match *self {
            TerminalSelector::ClippedVector { radius } => {
                let raw: Vec<f64> = (0..out.len()).map(|a| b[a % d]).collect();
                out.copy_from_slice(&truncate_qr(&raw, radius)?);
            }
            TerminalSelector::ClippedScalar { radius } => {
                let s = truncate_qr(&b[..1], radius)?[0];
                out.fill(s);
            }
            TerminalSelector::Brownian => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = b[a % d];
                }
            }
            TerminalSelector::Constant { value } => out.fill(value),
        }
        Ok(())
    }
}

/// Parameters of a named problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleSpec {
    pub id: ExampleId,
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::barrier")]
    pub barrier: f64,
    pub k: Option<usize>,
    pub d: Option<usize>,
    #[serde(default = "defaults::p")]
    pub p: f64,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    /// Drift coefficient of the drift oracle.
    #[serde(default = "defaults::b")]
    pub b: f64,
    pub terminal: Option<TerminalSelector>,
}

mod defaults {
    pub fn horizon() -> f64 {
        1.0
    }
    pub fn barrier() -> f64 {
        1.0
    }
    pub fn p() -> f64 {
        2.0
    }
    pub fn delta() -> f64 {
        super::DEFAULT_DELTA
    }
    pub fn b() -> f64 {
        0.25
    }
}

impl ExampleSpec {
    pub fn new(id: ExampleId) -> Self {
        Self {
            id,
            horizon: defaults::horizon(),
            barrier: defaults::barrier(),
            k: None,
            d: None,
            p: defaults::p(),
            delta: defaults::delta(),
            b: defaults::b(),
            terminal: None,
        }
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(match self.id {
            ExampleId::Example1 => 2,
            _ => 1,
        })
    }

    pub fn d(&self) -> usize {
        self.d.unwrap_or(1)
    }

    pub fn terminal(&self) -> TerminalSelector {
        self.terminal.unwrap_or(match self.id {
            ExampleId::Example1 => TerminalSelector::ClippedScalar { radius: 1.0 },
            ExampleId::Example2 | ExampleId::BrokenZLipschitz => {
                TerminalSelector::ClippedVector {
                    radius: DEFAULT_TERMINAL_RADIUS,
                }
            }
            ExampleId::OracleExponential => TerminalSelector::Constant { value: 1.0 },
            ExampleId::OracleMartingale | ExampleId::OracleDrift => TerminalSelector::Brownian,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Argument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.barrier > 0.0) {
            return Err(Error::Argument(format!("barrier must be positive, got {}", self.barrier)));
        }
        if self.k() == 0 || self.d() == 0 {
            return Err(Error::Argument("k and d must be at least 1".into()));
        }
        match self.id {
            ExampleId::Example1 => {
                if self.k() != 2 {
                    return Err(Error::Argument("example1 has k = 2".into()));
                }
                check_delta(self.delta, (-1.0f64).exp())
            }
            ExampleId::Example2 => {
                if !(self.p > 1.0) {
                    return Err(Error::Argument(format!("p must exceed 1, got {}", self.p)));
                }
                check_delta(self.delta, (-1.0 / self.p).exp())
            }
            ExampleId::OracleMartingale | ExampleId::OracleDrift if self.k() != 1 || self.d() != 1 => {
                Err(Error::Argument("oracle problems have k = d = 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Closed-form `(y, z)` at time `t` and Brownian state `b` for oracles.
    pub fn reference(&self, t: f64, b: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.k();
        let kd = k * self.d();
        match self.id {
            ExampleId::OracleMartingale => Some((vec![b[0]], vec![1.0])),
            ExampleId::OracleExponential => {
                let value = match self.terminal() {
                    TerminalSelector::Constant { value } => value,
                    _ => return None,
                };
                Some((vec![value * (-(self.horizon - t)).exp(); k], vec![0.0; kd]))
            }
            ExampleId::OracleDrift => Some((vec![b[0] + self.b * (self.horizon - t)], vec![1.0])),
            _ => None,
        }
    }
}

/// The first example's coefficient processes `ū` and `v̄`.
pub fn example_coefficients(
    ensemble: &PathEnsemble,
    barrier: f64,
) -> Result<(Arc<CoefficientProcess>, Arc<CoefficientProcess>)> {
    let u = truncated_coefficient(ensemble, &norm, barrier, 1)?;
    let v = truncated_coefficient(ensemble, &norm, barrier, 2)?;
    Ok((Arc::new(u), Arc::new(v)))
}

/// `ū[h(y₁) + e^{−y₂}; h(y₂) − e^{y₁}] + v̄[sin|z|; cos|z|]`.
pub struct Example1Generator {
    u: Arc<CoefficientProcess>,
    v: Arc<CoefficientProcess>,
    delta: f64,
    d: usize,
}

impl Generator for Example1Generator {
    fn k(&self) -> usize {
        2
    }

    fn d(&self) -> usize {
        self.d
    }

    fn depends_on_z(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        "example1".into()
    }

    fn eval(&self, path: usize, step: usize, _t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        let u = self.u.value(path, step);
        let v = self.v.value(path, step);
        let zn = norm(z);
        out[0] = u * (h_unchecked(y[0], self.delta) + (-y[1]).exp()) + v * zn.sin();
        out[1] = u * (h_unchecked(y[1], self.delta) - y[0].exp()) + v * zn.cos();
    }
}

/// `g_i = ū(h̄(|y|) + e^{−|B_t| y_i}) + v̄(|z|² ∧ |z|^{1/2}) + e^{−t}`.
pub struct Example2Generator {
    u: Arc<CoefficientProcess>,
    v: Arc<CoefficientProcess>,
    ensemble: Arc<PathEnsemble>,
    delta: f64,
    p: f64,
    k: usize,
    clamp_hits: AtomicU64,
}

impl Example2Generator {
    /// Number of exponentials evaluated with a clamped exponent so far.
    pub fn clamp_hits(&self) -> u64 {
        self.clamp_hits.load(Ordering::Relaxed)
    }
}

impl Generator for Example2Generator {
    fn k(&self) -> usize {
        self.k
    }

    fn d(&self) -> usize {
        self.ensemble.dim()
    }

    fn depends_on_z(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        "example2".into()
    }

    fn eval(&self, path: usize, step: usize, t: f64, y: &[f64], z: &[f64], out: &mut [f64]) {
        let u = self.u.value(path, step);
        let v = self.v.value(path, step);
        let b = norm(self.ensemble.position(path, step));
        let zn = norm(z);
        let zpart = (zn * zn).min(zn.sqrt());
        let hy = hbar_unchecked(norm(y), self.delta, self.p);
        for (o, yi) in out.iter_mut().zip(y) {
            let mut e = -b * yi;
            if e > EXPONENT_CLAMP {
                e = EXPONENT_CLAMP;
                self.clamp_hits.fetch_add(1, Ordering::Relaxed);
            }
            *o = u * (hy + e.exp()) + v * zpart + (-t).exp();
        }
    }
}

/// A built problem together with its declared structural data.
#[derive(Clone)]
pub struct ExampleProblem {
    pub spec: ExampleSpec,
    pub problem: BsdeProblem,
    /// Present for the second example, whose clamp counter is reported.
    pub example2: Option<Arc<Example2Generator>>,
}

fn terminal_values(spec: &ExampleSpec, ensemble: &PathEnsemble) -> Result<Vec<f64>> {
    let k = spec.k();
    let sel = spec.terminal();
    let n = ensemble.steps();
    let mut xi = vec![0.0; ensemble.paths() * k];
    for (p, out) in xi.chunks_mut(k).enumerate() {
        sel.evaluate(ensemble.position(p, n), out)?;
    }
    Ok(xi)
}

fn check_ensemble(spec: &ExampleSpec, ensemble: &PathEnsemble) -> Result<()> {
    spec.validate()?;
    if ensemble.dim() != spec.d() {
        return Err(Error::Argument(format!(
            "ensemble has d = {}, the problem asks for d = {}",
            ensemble.dim(),
            spec.d()
        )));
    }
    if (ensemble.grid().horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::Argument("ensemble horizon differs from the problem horizon".into()));
    }
    Ok(())
}

fn unit_process(ensemble: &PathEnsemble, value: f64) -> Arc<AdaptedProcess> {
    Arc::new(AdaptedProcess::constant(
        Arc::clone(ensemble.grid_arc()),
        ensemble.paths(),
        &[value],
    ))
}

pub fn example1_problem(spec: &ExampleSpec, ensemble: Arc<PathEnsemble>) -> Result<ExampleProblem> {
    if spec.id != ExampleId::Example1 {
        return Err(Error::Argument("not an example1 problem".into()));
    }
    check_ensemble(spec, &ensemble)?;
    let (u, v) = example_coefficients(&ensemble, spec.barrier)?;
    let generator = Arc::new(Example1Generator {
        u: Arc::clone(&u),
        v: Arc::clone(&v),
        delta: spec.delta,
        d: ensemble.dim(),
    });
    let xi = terminal_values(spec, &ensemble)?;
    let mut problem = BsdeProblem::new(generator, xi, Arc::clone(&ensemble))?.with_coefficients(Coefficients {
        u: Some(u),
        v: Some(Arc::clone(&v)),
        gamma: Some(v),
        g1: Some(unit_process(&ensemble, 0.0)),
        g2: Some(unit_process(&ensemble, 1.0)),
    })?;
    problem.alpha = Some(0.0);
    problem.barrier = Some(spec.barrier);
    problem.modulus = Some(h_modulus(spec.delta)?);
    Ok(ExampleProblem {
        spec: spec.clone(),
        problem,
        example2: None,
    })
}

pub fn example2_problem(spec: &ExampleSpec, ensemble: Arc<PathEnsemble>) -> Result<ExampleProblem> {
    if spec.id != ExampleId::Example2 {
        return Err(Error::Argument("not an example2 problem".into()));
    }
    check_ensemble(spec, &ensemble)?;
    let (u, v) = example_coefficients(&ensemble, spec.barrier)?;
    let generator = Arc::new(Example2Generator {
        u: Arc::clone(&u),
        v: Arc::clone(&v),
        ensemble: Arc::clone(&ensemble),
        delta: spec.delta,
        p: spec.p,
        k: spec.k(),
        clamp_hits: AtomicU64::new(0),
    });
    let xi = terminal_values(spec, &ensemble)?;
    let mut problem = BsdeProblem::new(generator.clone(), xi, Arc::clone(&ensemble))?.with_coefficients(Coefficients {
        u: Some(u),
        v: Some(Arc::new(v.scaled(2.0))),
        gamma: Some(v),
        g1: Some(unit_process(&ensemble, 0.0)),
        g2: Some(unit_process(&ensemble, 0.0)),
    })?;
    problem.alpha = Some(0.5);
    problem.p_bar = Some(spec.p);
    problem.barrier = Some(spec.barrier);
    problem.modulus = Some(hbar_modulus(spec.delta, spec.p)?);
    Ok(ExampleProblem {
        spec: spec.clone(),
        problem,
        example2: Some(generator),
    })
}

fn oracle_problem(spec: &ExampleSpec, ensemble: Arc<PathEnsemble>) -> Result<ExampleProblem> {
    check_ensemble(spec, &ensemble)?;
    let (k, d) = (spec.k(), spec.d());
    let generator: Arc<dyn Generator> = match spec.id {
        ExampleId::OracleMartingale => Arc::new(FnGenerator::zero(k, d)),
        ExampleId::OracleExponential => Arc::new(FnGenerator::new("-y", k, d, false, |_, _, _, y, _, out| {
            for (o, v) in out.iter_mut().zip(y) {
                *o = -v;
            }
        })),
        ExampleId::OracleDrift => {
            let b = spec.b;
            Arc::new(FnGenerator::new("b*z", k, d, true, move |_, _, _, _, z, out| out[0] = b * z[0]))
        }
        _ => return Err(Error::Argument("not an oracle problem".into())),
    };
    let xi = terminal_values(spec, &ensemble)?;
    let mut problem = BsdeProblem::new(generator, xi, Arc::clone(&ensemble))?;
    let constant = |c: f64| -> Result<Arc<CoefficientProcess>> {
        Ok(Arc::new(CoefficientProcess::constant(
            Arc::clone(ensemble.grid_arc()),
            ensemble.paths(),
            c,
            1,
        )?))
    };
    // constant coefficients leave the regression basis unchanged
    problem.coefficients = if spec.id == ExampleId::OracleDrift {
        Coefficients {
            u: Some(constant(0.0)?),
            v: Some(constant(spec.b.abs())?),
            ..Coefficients::default()
        }
    } else {
        Coefficients {
            u: Some(constant(0.0)?),
            v: Some(constant(0.0)?),
            gamma: Some(constant(0.0)?),
            g1: Some(unit_process(&ensemble, 0.0)),
            g2: Some(unit_process(&ensemble, 0.0)),
        }
    };
    problem.modulus = Some(ModulusFunction::identity());
    problem.alpha = Some(0.0);
    Ok(ExampleProblem {
        spec: spec.clone(),
        problem,
        example2: None,
    })
}

fn broken_problem(spec: &ExampleSpec, ensemble: Arc<PathEnsemble>) -> Result<ExampleProblem> {
    check_ensemble(spec, &ensemble)?;
    let (u, v) = example_coefficients(&ensemble, spec.barrier)?;
    let vg = Arc::clone(&v);
    let k = spec.k();
    let generator = Arc::new(FnGenerator::new("2 vbar |z|", k, ensemble.dim(), true, move |p, i, _, _, z, out| {
        out.fill(2.0 * vg.value(p, i) * norm(z));
    }));
    let xi = terminal_values(spec, &ensemble)?;
    let mut problem = BsdeProblem::new(generator, xi, Arc::clone(&ensemble))?.with_coefficients(Coefficients {
        u: Some(u),
        v: Some(Arc::clone(&v)),
        gamma: Some(v),
        g1: Some(unit_process(&ensemble, 0.0)),
        g2: Some(unit_process(&ensemble, 1.0)),
    })?;
    problem.alpha = Some(0.0);
    problem.barrier = Some(spec.barrier);
    problem.modulus = Some(ModulusFunction::identity());
    Ok(ExampleProblem {
        spec: spec.clone(),
        problem,
        example2: None,
    })
}

/// Builds any registered problem on `ensemble`.
pub fn build_problem(spec: &ExampleSpec, ensemble: Arc<PathEnsemble>) -> Result<ExampleProblem> {
    match spec.id {
        ExampleId::Example1 => example1_problem(spec, ensemble),
        ExampleId::Example2 => example2_problem(spec, ensemble),
        ExampleId::BrokenZLipschitz => broken_problem(spec, ensemble),
        _ => oracle_problem(spec, ensemble),
    }
}

/// The three closed-form problems with default parameters.
pub fn oracle_problems() -> Vec<ExampleSpec> {
    vec![
        ExampleSpec::new(ExampleId::OracleMartingale),
        ExampleSpec::new(ExampleId::OracleExponential),
        ExampleSpec::new(ExampleId::OracleDrift),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_branches() {
        let d = DEFAULT_DELTA;
        assert_eq!(h_osgood(0.0, d).unwrap(), 0.0);
        let left = -d * d.ln();
        assert!((h_osgood(d, d).unwrap() - left).abs() < 1e-15);
        let eps = 1e-7;
        let fd = (h_osgood(d - eps, d).unwrap() - h_osgood(d - 3.0 * eps, d).unwrap()) / (2.0 * eps);
        let slope = (h_osgood(d + 1.0, d).unwrap() - h_osgood(d, d).unwrap()) / 1.0;
        assert!((slope - (-d.ln() - 1.0)).abs() < 1e-12);
        assert!((fd - slope).abs() < 1e-5);
        assert!(h_osgood(1.0, 0.5).is_err());
        assert!(h_osgood(-1.0, d).is_err());
    }

    #[test]
    fn hbar_limits() {
        assert_eq!(hbar_osgood(0.0, DEFAULT_DELTA, 2.0).unwrap(), 0.0);
        let x = 0.05;
        assert!((hbar_osgood(x, DEFAULT_DELTA, 1e6).unwrap() - x).abs() < 1e-6);
        assert!(hbar_osgood(x, DEFAULT_DELTA, 1.0).is_err());
    }

    #[test]
    fn oracle_references() {
        let specs = oracle_problems();
        assert_eq!(specs[0].reference(0.0, &[0.0]).unwrap().0, vec![0.0]);
        let (y, z) = specs[1].reference(0.0, &[0.3]).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(z, vec![0.0]);
        assert!(ExampleSpec::new(ExampleId::Example1).reference(0.0, &[0.0]).is_none());
    }

    #[test]
    fn spec_roundtrip() {
        let json = r#"{"id":"example2","k":1,"terminal":{"kind":"clipped-scalar","radius":1.0}}"#;
        let spec: ExampleSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.id, ExampleId::Example2);
        assert_eq!(spec.terminal(), TerminalSelector::ClippedScalar { radius: 1.0 });
        assert_eq!(spec.delta, DEFAULT_DELTA);
    }
}
