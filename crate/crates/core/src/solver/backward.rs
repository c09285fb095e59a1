use std::sync::Arc;

use rayon::prelude::*;

use crate::condexp::{covariance_targets, fit_conditional_expectation};
use crate::error::{Error, Result};
use crate::norms::{compute_norms, DEFAULT_BETAS};
use crate::process::AdaptedProcess;

use super::generator::Generator;
use super::problem::{BsdeProblem, InnerIteration, SolutionPair, StepDiagnostics, StepMode};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `y_i`, `(path, component)` row-major.
    pub y: Vec<f64>,
    /// Largest inner iteration count over paths (0 for explicit steps).
    pub inner_iterations: usize,
}

/// One backward step from the conditional expectations `E_i`.
///
/// Explicit: `y_i = E_i + Δt g(t_i, E_i, z_i)`. Implicit: `y_i` solves
/// `y = E_i + Δt g(t_i, y, z_i)` by damped fixed-point iteration started at
/// `warm` (or `E_i`).
#[allow(clippy::too_many_arguments)]
pub fn backward_step(
    expectation: &[f64],
    warm: Option<&[f64]>,
    z: &[f64],
    generator: &dyn Generator,
    step: usize,
    t: f64,
    dt: f64,
    mode: StepMode,
    inner: &InnerIteration,
) -> Result<StepOutput> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("time step must be positive, got {dt}")));
    }
    let k = generator.k();
    let kd = k * generator.d();
    let m = expectation.len() / k;
    if expectation.len() != m * k || z.len() != m * kd || warm.is_some_and(|w| w.len() != m * k) {
        return Err(Error::Argument("backward step inputs are misaligned".into()));
    }
    let mut y = warm.unwrap_or(expectation).to_vec();
    let iterations: Vec<Option<usize>> = y
        .par_chunks_mut(k)
        .enumerate()
        .map(|(p, yp)| {
            let e = &expectation[p * k..(p + 1) * k];
            let zp = &z[p * kd..(p + 1) * kd];
            let mut g = vec![0.0; k];
            match mode {
                StepMode::Explicit => {
                    generator.eval(p, step, t, e, zp, &mut g);
                    for c in 0..k {
                        yp[c] = e[c] + dt * g[c];
                    }
                    yp.iter().all(|v| v.is_finite()).then_some(0)
                }
                StepMode::Implicit => damped_fixed_point(yp, e, zp, generator, p, step, t, dt, inner, &mut g),
            }
        })
        .collect();
    let failed = iterations.iter().filter(|i| i.is_none()).count();
    if failed > 0 {
        return Err(Error::StepNonConvergence { step, paths: failed });
    }
    Ok(StepOutput {
        y,
        inner_iterations: iterations.into_iter().flatten().max().unwrap_or(0),
    })
}

#[allow(clippy::too_many_arguments)]
fn damped_fixed_point(
    yp: &mut [f64],
    e: &[f64],
    zp: &[f64],
    generator: &dyn Generator,
    p: usize,
    step: usize,
    t: f64,
    dt: f64,
    inner: &InnerIteration,
    g: &mut [f64],
) -> Option<usize> {
    let w = inner.damping;
    for it in 1..=inner.max_iterations {
        generator.eval(p, step, t, yp, zp, g);
        let mut delta: f64 = 0.0;
        let mut size: f64 = 0.0;
        for c in 0..yp.len() {
            let next = (1.0 - w) * yp[c] + w * (e[c] + dt * g[c]);
            delta = delta.max((next - yp[c]).abs());
            size = size.max(next.abs());
            yp[c] = next;
        }
        if !(delta.is_finite() && size.is_finite()) {
            return None;
        }
        if delta <= inner.rel_tol * (1.0 + size) {
            return Some(it);
        }
    }
    None
}

/// Backward recursion driven by `generator`; implicit steps start at `E_i`.
pub(crate) fn backward_solve(problem: &BsdeProblem, generator: &dyn Generator) -> Result<SolutionPair> {
    let ens = &problem.ensemble;
    let grid = Arc::clone(ens.grid_arc());
    let (m, k, d) = (ens.paths(), problem.k(), problem.d());
    let n = grid.steps();
    let kd = k * d;
    let mut y = AdaptedProcess::zeros(Arc::clone(&grid), m, k);
    let mut z = AdaptedProcess::zeros(Arc::clone(&grid), m, kd);
    for p in 0..m {
        y.at_mut(p, n).copy_from_slice(problem.terminal_at(p));
    }
    let mut diagnostics = Vec::with_capacity(n);
    let mut next = vec![0.0; m * k];
    let mut inc = vec![0.0; m * d];
    for i in (0..n).rev() {
        let dt = grid.dt(i);
        for p in 0..m {
            next[p * k..(p + 1) * k].copy_from_slice(y.at(p, i + 1));
            inc[p * d..(p + 1) * d].copy_from_slice(ens.increment(p, i));
        }
        let at_step = |e: Error| match e {
            Error::SingularFit { .. } => Error::SingularFit { step: Some(i) },
            other => other,
        };
        let features = problem.basis.features(ens, i);
        let ridge = problem.basis.ridge_scale;
        let mean = fit_conditional_expectation(&next, k, &features, ridge).map_err(at_step)?;
        let targets = covariance_targets(&next, mean.fitted(), k, &inc, d, dt);
        let zfit = fit_conditional_expectation(&targets, kd, &features, ridge).map_err(at_step)?;
        let expectation = mean.fitted();
        let zi = zfit.fitted();
        let out = backward_step(
            expectation,
            None,
            zi,
            generator,
            i,
            grid.time(i),
            dt,
            problem.mode,
            &problem.inner,
        )?;
        for p in 0..m {
            y.at_mut(p, i).copy_from_slice(&out.y[p * k..(p + 1) * k]);
            z.at_mut(p, i).copy_from_slice(&zi[p * kd..(p + 1) * kd]);
        }
        diagnostics.push(StepDiagnostics {
            step: i,
            expectation_residual: mean.diagnostics.residual_rms.iter().cloned().fold(0.0, f64::max),
            z_residual: zfit.diagnostics.residual_rms.iter().cloned().fold(0.0, f64::max),
            condition: mean.diagnostics.condition,
            inner_iterations: out.inner_iterations,
        });
    }
    diagnostics.reverse();
    let norms = compute_norms(&y, &z, &DEFAULT_BETAS)?;
    Ok(SolutionPair {
        y,
        z,
        norms,
        steps: diagnostics,
    })
}

/// Backward scheme for a driver that does not depend on `z`; `z` comes from
/// the martingale projection at each step.
pub fn solve_z_independent(problem: &BsdeProblem) -> Result<SolutionPair> {
    if problem.generator.depends_on_z() {
        return Err(Error::Argument(format!(
            "generator `{}` depends on z; use the Picard solver",
            problem.generator.label()
        )));
    }
    backward_solve(problem, problem.generator.as_ref())
}
