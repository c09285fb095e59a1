use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condexp::{fit_conditional_expectation, RegressionBasis};
use crate::error::{Error, Result};
use crate::modulus::{theta, theta_inv, ModulusFunction};
use crate::paths::{CoefficientProcess, PathEnsemble};
use crate::process::AdaptedProcess;

use super::report::InequalityReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityConfig {
    pub basis: RegressionBasis,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        Self {
            basis: RegressionBasis::default().with_running_functionals(true),
            abs_tol: 1e-6,
            rel_tol: 1e-4,
        }
    }
}

/// `E[terminal + Σ_{j>=i} term_j | F_{t_i}]` for every node `i`, together
/// with the prediction standard error of the regression at `i`.
///
/// `term_i` is known at `t_i` and is added pathwise; only
/// `terminal + Σ_{j>i} term_j` is regressed, and the fit is projected onto
/// the sample range of that target. At the last node the value is the
/// terminal sample itself.
pub(crate) struct ConditionalSums {
    /// `(path, node)` row-major.
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

pub(crate) fn conditional_sums(
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    terminal: &[f64],
    term: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<ConditionalSums> {
    let (m, n) = (ensemble.paths(), ensemble.steps());
    let nodes = n + 1;
    let mut values = vec![0.0; m * nodes];
    let mut errors = vec![0.0; nodes];
    let mut future: Vec<f64> = terminal.to_vec();
    for p in 0..m {
        values[p * nodes + n] = terminal[p];
    }
    for i in (0..n).rev() {
        let features = basis.features(ensemble, i);
        let est = fit_conditional_expectation(&future, 1, &features, basis.ridge_scale)?;
        errors[i] = est.prediction_error(0);
        let (lo, hi) = range(&future);
        let terms: Vec<f64> = (0..m).into_par_iter().map(|p| term(p, i)).collect();
        for p in 0..m {
            values[p * nodes + i] = terms[p] + est.fitted()[p].clamp(lo, hi);
            future[p] += terms[p];
        }
    }
    Ok(ConditionalSums { values, errors })
}

fn range(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// `max_paths Σ_{j>=i} β_j Δt_j` per node.
fn tail_sup(beta: &CoefficientProcess) -> Vec<f64> {
    let grid = beta.process.grid();
    let n = grid.steps();
    let mut out = vec![0.0; n + 1];
    for p in 0..beta.paths() {
        let mut acc = 0.0;
        for i in (0..n).rev() {
            acc += beta.value(p, i) * grid.dt(i);
            out[i] = f64::max(out[i], acc);
        }
    }
    out
}

fn check_scalar(name: &str, x: &AdaptedProcess, ensemble: &PathEnsemble) -> Result<()> {
    if x.dim() != 1 || x.paths() != ensemble.paths() || x.grid() != ensemble.grid() {
        return Err(Error::Argument(format!("{name} must be a scalar process on the ensemble")));
    }
    if !x.all_finite() {
        return Err(Error::Domain(format!("{name} has non-finite values")));
    }
    Ok(())
}

struct Comparison<'a> {
    mu: &'a AdaptedProcess,
    hypothesis: &'a ConditionalSums,
    bound: &'a dyn Fn(usize, usize) -> f64,
    bound_error: &'a dyn Fn(usize) -> f64,
}

struct Tally {
    points: usize,
    holds: usize,
    max_hyp: f64,
    max_concl: f64,
    violations: usize,
    max_ratio: f64,
}

fn compare(c: &Comparison, cfg: &InequalityConfig) -> Tally {
    let nodes = c.mu.nodes();
    let mut t = Tally {
        points: 0,
        holds: 0,
        max_hyp: f64::NEG_INFINITY,
        max_concl: f64::NEG_INFINITY,
        violations: 0,
        max_ratio: 0.0,
    };
    for p in 0..c.mu.paths() {
        for i in 0..nodes {
            t.points += 1;
            let mu = c.mu.scalar(p, i);
            let h = c.hypothesis.values[p * nodes + i];
            let hyp = mu - h;
            t.max_hyp = t.max_hyp.max(hyp);
            let hyp_tol = cfg.abs_tol + cfg.rel_tol * mu.abs().max(h.abs()) + 2.0 * c.hypothesis.errors[i];
            if hyp > hyp_tol {
                continue;
            }
            t.holds += 1;
            let b = (c.bound)(p, i);
            let concl = mu - b;
            t.max_concl = t.max_concl.max(concl);
            if b > 0.0 {
                t.max_ratio = t.max_ratio.max(mu / b);
            }
            let tol = cfg.abs_tol + cfg.rel_tol * mu.abs().max(b.abs()) + 2.0 * (c.bound_error)(i);
            if concl > tol {
                t.violations += 1;
            }
        }
    }
    t
}

fn report_from(name: &str, t: Tally, bound_constant: f64) -> InequalityReport {
    InequalityReport {
        inequality: name.into(),
        points: t.points,
        hypothesis_holds: t.holds,
        max_hypothesis_residual: t.max_hyp,
        max_conclusion_residual: t.max_concl,
        conclusion_violations: t.violations,
        max_conclusion_ratio: t.max_ratio,
        bound_constant,
        constants: BTreeMap::new(),
        passed: t.violations == 0,
        notes: vec!["essential sups replaced by maxima over paths".into()],
    }
}

/// Checks `μ̄_t <= e^{‖∫_t^T β‖_∞} E[η + ∫_t^T f̄ ds | F_t]` wherever
/// `μ̄_t <= E[η + ∫_t^T (β μ̄ + f̄) ds | F_t]` holds; with `l_bar`, also the
/// sup-form variant.
#[allow(clippy::too_many_arguments)]
pub fn gronwall_verify(
    ensemble: &PathEnsemble,
    mu: &AdaptedProcess,
    beta: &CoefficientProcess,
    eta: &[f64],
    f_bar: &AdaptedProcess,
    l_bar: Option<&AdaptedProcess>,
    cfg: &InequalityConfig,
) -> Result<InequalityReport> {
    check_scalar("mu", mu, ensemble)?;
    check_scalar("f_bar", f_bar, ensemble)?;
    check_scalar("beta", &beta.process, ensemble)?;
    if eta.len() != ensemble.paths() || eta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("eta must hold one finite value per path".into()));
    }
    let grid = ensemble.grid();
    let hyp = conditional_sums(ensemble, &cfg.basis, eta, |p, i| {
        (beta.value(p, i) * mu.scalar(p, i) + f_bar.scalar(p, i)) * grid.dt(i)
    })?;
    let conc = conditional_sums(ensemble, &cfg.basis, eta, |p, i| f_bar.scalar(p, i) * grid.dt(i))?;
    let tails = tail_sup(beta);
    let nodes = grid.steps() + 1;
    let bound = |p: usize, i: usize| tails[i].exp() * conc.values[p * nodes + i];
    let bound_error = |i: usize| tails[i].exp() * conc.errors[i];
    let tally = compare(
        &Comparison {
            mu,
            hypothesis: &hyp,
            bound: &bound,
            bound_error: &bound_error,
        },
        cfg,
    );
    let mut report = report_from("gronwall", tally, tails[0].exp());
    report.constants.insert("beta_tail_integral_max".into(), tails[0]);
    let eta_mean = eta.iter().sum::<f64>() / eta.len() as f64;
    report.constants.insert("eta_mean".into(), eta_mean);
    if let Some(l) = l_bar {
        check_scalar("l_bar", l, ensemble)?;
        // E[sup_{s>=t} μ̄_s + ∫_t^T l̄ ds | F_t]
        let m = ensemble.paths();
        let n = grid.steps();
        let mut running_sup = vec![0.0; m * nodes];
        for p in 0..m {
            let mut s = f64::NEG_INFINITY;
            for i in (0..nodes).rev() {
                s = s.max(mu.scalar(p, i));
                running_sup[p * nodes + i] = s;
            }
        }
        // regress sup_{s>=i} μ̄ + Σ_{j>=i} l̄Δt node by node
        let mut q = vec![0.0; m * nodes];
        let mut q_err = vec![0.0; nodes];
        let mut tail_l = vec![0.0; m];
        for p in 0..m {
            q[p * nodes + n] = running_sup[p * nodes + n];
        }
        for i in (0..n).rev() {
            for (p, tl) in tail_l.iter_mut().enumerate() {
                *tl += l.scalar(p, i) * grid.dt(i);
            }
            let target: Vec<f64> = (0..m).map(|p| running_sup[p * nodes + i] + tail_l[p]).collect();
            let features = cfg.basis.features(ensemble, i);
            let est = fit_conditional_expectation(&target, 1, &features, cfg.basis.ridge_scale)?;
            q_err[i] = est.prediction_error(0);
            let (lo, hi) = range(&target);
            for p in 0..m {
                q[p * nodes + i] = est.fitted()[p].clamp(lo, hi);
            }
        }
        let mut sup_holds = 0usize;
        let mut sup_violations = 0usize;
        for p in 0..m {
            for i in 0..nodes {
                let qv = q[p * nodes + i];
                let h = hyp.values[p * nodes + i];
                let tol_h = cfg.abs_tol + cfg.rel_tol * qv.abs().max(h.abs()) + 2.0 * (hyp.errors[i] + q_err[i]);
                if qv - h > tol_h {
                    continue;
                }
                sup_holds += 1;
                let mu_v = mu.scalar(p, i);
                let b = bound(p, i);
                let tol_a = cfg.abs_tol + cfg.rel_tol * mu_v.abs().max(qv.abs()) + 2.0 * q_err[i];
                let tol_b = cfg.abs_tol + cfg.rel_tol * qv.abs().max(b.abs()) + 2.0 * (q_err[i] + bound_error(i));
                if mu_v - qv > tol_a || qv - b > tol_b {
                    sup_violations += 1;
                }
            }
        }
        report.constants.insert("sup_form_hypothesis_holds".into(), sup_holds as f64);
        report.constants.insert("sup_form_violations".into(), sup_violations as f64);
        report.passed &= sup_violations == 0;
    }
    Ok(report)
}

/// Checks `μ̃_t <= Θ⁻¹(Θ(c) + ‖∫_t^T β‖_∞)` (or `μ̃ ≡ 0` when `c = 0`)
/// wherever `μ̃_t <= c + E[∫_t^T β ρ(μ̃) ds | F_t]` holds.
pub fn bihari_verify(
    ensemble: &PathEnsemble,
    mu_tilde: &AdaptedProcess,
    beta: &CoefficientProcess,
    c: f64,
    rho: &ModulusFunction,
    cfg: &InequalityConfig,
) -> Result<InequalityReport> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("c must be finite and nonnegative, got {c}")));
    }
    check_scalar("mu_tilde", mu_tilde, ensemble)?;
    check_scalar("beta", &beta.process, ensemble)?;
    if mu_tilde.values().iter().any(|x| *x < 0.0) {
        return Err(Error::Domain("mu_tilde must be nonnegative".into()));
    }
    let grid = ensemble.grid();
    let eta = vec![c; ensemble.paths()];
    let hyp = conditional_sums(ensemble, &cfg.basis, &eta, |p, i| {
        beta.value(p, i) * rho.eval(mu_tilde.scalar(p, i)) * grid.dt(i)
    })?;
    let tails = tail_sup(beta);
    let per_node: Vec<f64> = if c == 0.0 {
        vec![0.0; tails.len()]
    } else {
        let base = theta(rho, c)?;
        tails
            .iter()
            .map(|b| match theta_inv(rho, base + b) {
                Ok(x) => Ok(x),
                Err(Error::Range { .. }) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?
    };
    let bound = |_: usize, i: usize| per_node[i];
    let no_error = |_: usize| 0.0;
    let tally = compare(
        &Comparison {
            mu: mu_tilde,
            hypothesis: &hyp,
            bound: &bound,
            bound_error: &no_error,
        },
        cfg,
    );
    let mut report = report_from("bihari", tally, per_node[0]);
    report.constants.insert("beta_tail_integral_max".into(), tails[0]);
    report.constants.insert("c".into(), c);
    if c == 0.0 {
        report.notes.push("c = 0: conclusion is mu_tilde = 0".into());
    }
    Ok(report)
}

/// Data satisfying the comparison hypothesis up to regression error:
/// `μ_i = (Ê_i[η + Σ_{j>i} l_j Δt_j] + f_i Δt_i − slack_i) ∨ 0` with
/// `l = β ρ(μ) + f`, fitted with the verifier's own regression.
#[allow(clippy::too_many_arguments)]
pub fn backward_construct(
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    beta: &CoefficientProcess,
    eta: &[f64],
    rho: impl Fn(f64) -> f64,
    f: impl Fn(usize, usize) -> f64,
    slack: impl Fn(usize, usize) -> f64,
) -> Result<AdaptedProcess> {
    let (m, n) = (ensemble.paths(), ensemble.steps());
    if eta.len() != m || beta.paths() != m || beta.process.grid() != ensemble.grid() {
        return Err(Error::Argument("eta and beta must match the ensemble".into()));
    }
    let grid = ensemble.grid();
    let mut mu = AdaptedProcess::zeros(Arc::clone(ensemble.grid_arc()), m, 1);
    let mut future = eta.to_vec();
    for (p, e) in eta.iter().enumerate() {
        mu.at_mut(p, n)[0] = *e;
    }
    for i in (0..n).rev() {
        let features = basis.features(ensemble, i);
        let est = fit_conditional_expectation(&future, 1, &features, basis.ridge_scale)?;
        let (lo, hi) = range(&future);
        let dt = grid.dt(i);
        for (p, fut) in future.iter_mut().enumerate() {
            let partial = est.fitted()[p].clamp(lo, hi) + f(p, i) * dt;
            let v = (partial - slack(p, i)).max(0.0);
            mu.at_mut(p, i)[0] = v;
            *fut += (beta.value(p, i) * rho(v) + f(p, i)) * dt;
        }
    }
    Ok(mu)
}
