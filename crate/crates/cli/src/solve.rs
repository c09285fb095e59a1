use std::sync::Arc;

use bsde_core::examples::{build_problem, ExampleProblem, ExampleSpec};
use bsde_core::numeric::stats::sorted_sum;
use bsde_core::solver::{picard_solve, solve_z_independent, ConvergenceReport, PicardConfig, SolutionPair, StopReason};
use bsde_core::verifiers::{class_D_diagnostic, condition_3_4_estimate, ClassDCurve};
use bsde_core::numeric::Estimate;
use bsde_core::{AdaptedProcess, PathEnsemble, TimeGrid};
use serde::Serialize;

use crate::config::{RunConfig, SolverConfig};
use crate::error::AppError;
use crate::output::{Cell, Output};

/// Simulates the ensemble and builds the configured problem on it.
pub fn build(cfg: &RunConfig, spec: &ExampleSpec, steps: usize, paths: usize) -> Result<ExampleProblem, AppError> {
    let grid = Arc::new(TimeGrid::uniform(spec.horizon, steps)?);
    let ensemble = Arc::new(PathEnsemble::simulate(grid, paths, spec.d(), cfg.seed)?);
    let mut ex = build_problem(spec, ensemble)?;
    ex.problem.mode = cfg.solver.mode;
    ex.problem.inner = cfg.solver.inner;
    Ok(ex)
}

/// Picard for `z`-dependent drivers (or when forced), the direct backward
/// scheme otherwise.
pub fn run_solver(ex: &ExampleProblem, s: &SolverConfig) -> Result<(SolutionPair, Option<ConvergenceReport>), AppError> {
    let problem = &ex.problem;
    if !(problem.generator.depends_on_z() || s.force_picard || s.initial.is_some()) {
        return Ok((solve_z_independent(problem)?, None));
    }
    let mut picard = PicardConfig::new(s.tol, s.max_iter, s.betas.clone());
    if let Some(init) = &s.initial {
        let grid = Arc::clone(problem.ensemble.grid_arc());
        let m = problem.paths();
        picard = picard.with_initial(
            AdaptedProcess::constant(Arc::clone(&grid), m, &init.y),
            AdaptedProcess::constant(grid, m, &init.z),
        );
    }
    let (sol, report) = picard_solve(problem, &picard)?;
    Ok((sol, Some(report)))
}

fn mean(v: &[f64]) -> f64 {
    sorted_sum(v) / v.len() as f64
}

fn abs_diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-node mean absolute errors against the closed form.
pub struct OracleErrors {
    pub y: Vec<f64>,
    /// Nodes `0..N`.
    pub z: Vec<f64>,
}

impl OracleErrors {
    pub fn y_sup(&self) -> f64 {
        self.y.iter().cloned().fold(0.0, f64::max)
    }

    pub fn z_time_avg(&self) -> f64 {
        mean(&self.z)
    }
}

pub fn oracle_errors(spec: &ExampleSpec, ens: &PathEnsemble, sol: &SolutionPair) -> Option<OracleErrors> {
    let grid = ens.grid();
    let n = grid.steps();
    let m = ens.paths();
    spec.reference(0.0, ens.position(0, 0))?;
    let mut y = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n);
    for i in 0..=n {
        let t = grid.time(i);
        let mut ey = Vec::with_capacity(m);
        let mut ez = Vec::with_capacity(m);
        for p in 0..m {
            let (ry, rz) = spec.reference(t, ens.position(p, i))?;
            ey.push(abs_diff_norm(sol.y.at(p, i), &ry));
            ez.push(abs_diff_norm(sol.z.at(p, i), &rz));
        }
        y.push(mean(&ey));
        if i < n {
            z.push(mean(&ez));
        }
    }
    Some(OracleErrors { y, z })
}

#[derive(Serialize)]
struct Summary {
    problem: &'static str,
    steps: usize,
    paths: usize,
    y0_mean: Vec<f64>,
    picard: bool,
    stop_reason: Option<StopReason>,
    iterations: Option<usize>,
    y_sup_mean_abs_error: Option<f64>,
    z_time_avg_abs_error: Option<f64>,
    condition_3_4: Option<Estimate>,
    class_d: ClassDCurve,
    example2_clamp_hits: Option<u64>,
}

pub fn run(cfg: &RunConfig, out: &mut Output) -> Result<(), AppError> {
    let ex = build(cfg, &cfg.problem, cfg.grid.steps, cfg.ensemble.paths)?;
    let (sol, report) = run_solver(&ex, &cfg.solver)?;
    let ens = &ex.problem.ensemble;
    let errors = oracle_errors(&cfg.problem, ens, &sol);

    let grid = ens.grid();
    let (m, n) = (ens.paths(), grid.steps());
    let mut rows = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let ay: Vec<f64> = (0..m).map(|p| sol.y.norm_at(p, i)).collect();
        let az: Vec<f64> = (0..m).map(|p| sol.z.norm_at(p, i)).collect();
        rows.push(vec![
            Cell::from(i),
            Cell::from(grid.time(i)),
            Cell::from(mean(&ay)),
            Cell::from(mean(&az)),
            Cell::from(errors.as_ref().map(|e| e.y[i])),
            Cell::from(errors.as_ref().and_then(|e| e.z.get(i).copied())),
        ]);
    }
    out.csv(
        "solution.csv",
        &["step", "t", "mean_abs_y", "mean_abs_z", "y_mean_abs_error", "z_mean_abs_error"],
        rows,
    )?;
    out.json("norms.json", &sol.norms)?;
    if let Some(r) = &report {
        write_convergence(out, r)?;
    }

    let condition_3_4 = match &ex.problem.coefficients.u {
        Some(u) => Some(condition_3_4_estimate(u, &sol.y)?),
        None => None,
    };
    let y0: Vec<f64> = (0..ex.problem.k())
        .map(|c| mean(&(0..m).map(|p| sol.y.at(p, 0)[c]).collect::<Vec<_>>()))
        .collect();
    let summary = Summary {
        problem: cfg.problem.id.name(),
        steps: n,
        paths: m,
        y0_mean: y0,
        picard: report.is_some(),
        stop_reason: report.as_ref().map(|r| r.stop_reason),
        iterations: report.as_ref().map(|r| r.iteration_count()),
        y_sup_mean_abs_error: errors.as_ref().map(OracleErrors::y_sup),
        z_time_avg_abs_error: errors.as_ref().map(OracleErrors::z_time_avg),
        condition_3_4,
        class_d: class_D_diagnostic(&sol.y, &cfg.solver.class_d_levels)?,
        example2_clamp_hits: ex.example2.as_ref().map(|g| g.clamp_hits()),
    };
    out.json("summary.json", &summary)?;
    match &report {
        Some(r) if !r.converged() => Err(AppError::NonConvergence(format!(
            "Picard iteration stopped with {:?} after {} iterations",
            r.stop_reason,
            r.iteration_count()
        ))),
        _ => Ok(()),
    }
}

pub fn write_convergence(out: &mut Output, r: &ConvergenceReport) -> Result<(), AppError> {
    let mut rows = Vec::new();
    for it in &r.iterations {
        for (s, mb) in it.distance.s_beta.iter().zip(&it.distance.m_beta) {
            rows.push(vec![
                Cell::from(it.iteration),
                Cell::from(s.beta),
                Cell::from(s.estimate.mean),
                Cell::from(s.estimate.std_error),
                Cell::from(mb.estimate.mean),
                Cell::from(mb.estimate.std_error),
                Cell::from(it.distance.class_d.mean),
                Cell::from(it.distance.class_d.std_error),
                Cell::from(it.criterion),
            ]);
        }
    }
    out.csv(
        "convergence.csv",
        &[
            "iteration",
            "beta",
            "s_beta_dist",
            "s_beta_stderr",
            "m_beta_dist",
            "m_beta_stderr",
            "classd_dist",
            "classd_stderr",
            "criterion",
        ],
        rows,
    )?;
    out.json("convergence.json", r)
}
