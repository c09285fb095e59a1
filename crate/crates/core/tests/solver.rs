use std::sync::Arc;

use bsde_core::numeric::stats::sorted_sum;
use bsde_core::solver::*;
use bsde_core::{PathEnsemble, TimeGrid};

fn ensemble(n: usize, m: usize, seed: u64) -> Arc<PathEnsemble> {
    let grid = Arc::new(TimeGrid::uniform(1.0, n).unwrap());
    Arc::new(PathEnsemble::simulate(grid, m, 1, seed).unwrap())
}

fn mean(v: &[f64]) -> f64 {
    sorted_sum(v) / v.len() as f64
}

/// max over nodes of E|y_i − reference|
fn sup_mean_abs_error(sol: &SolutionPair, reference: impl Fn(usize, usize) -> f64) -> f64 {
    let y = &sol.y;
    (0..y.nodes())
        .map(|i| mean(&(0..y.paths()).map(|p| (y.scalar(p, i) - reference(p, i)).abs()).collect::<Vec<_>>()))
        .fold(0.0, f64::max)
}

fn time_avg_z_error(sol: &SolutionPair, reference: f64) -> f64 {
    let z = &sol.z;
    let n = z.nodes() - 1;
    let per_step: Vec<f64> = (0..n)
        .map(|i| mean(&(0..z.paths()).map(|p| (z.scalar(p, i) - reference).abs()).collect::<Vec<_>>()))
        .collect();
    mean(&per_step)
}

#[test]
fn martingale_oracle() {
    let ens = ensemble(50, 10_000, 7);
    let g = Arc::new(FnGenerator::zero(1, 1));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |b, out| out[0] = b[0]).unwrap();
    let sol = solve_z_independent(&problem).unwrap();
    let err = sup_mean_abs_error(&sol, |p, i| ens.position(p, i)[0]);
    assert!(err <= 5e-2, "y error {err}");
    assert!(time_avg_z_error(&sol, 1.0) <= 1e-1);
    for p in 0..ens.paths() {
        assert_eq!(sol.y.scalar(p, 50), ens.position(p, 50)[0]);
    }
}

#[test]
fn exponential_oracle_implicit() {
    let ens = ensemble(50, 10_000, 8);
    let g = Arc::new(FnGenerator::new("minus y", 1, 1, false, |_, _, _, y, _, out| out[0] = -y[0]));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |_, out| out[0] = 1.0).unwrap();
    let sol = solve_z_independent(&problem).unwrap();
    let err = sup_mean_abs_error(&sol, |_, i| (-(1.0 - ens.grid().time(i))).exp());
    assert!(err <= 5e-2, "y error {err}");
    assert!(time_avg_z_error(&sol, 0.0) <= 5e-2);
}

#[test]
fn unit_driver() {
    let ens = ensemble(50, 2_000, 9);
    let g = Arc::new(FnGenerator::new("one", 1, 1, false, |_, _, _, _, _, out| out[0] = 1.0));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |_, out| out[0] = 0.0).unwrap();
    let sol = solve_z_independent(&problem).unwrap();
    let err = sup_mean_abs_error(&sol, |_, i| 1.0 - ens.grid().time(i));
    assert!(err <= 5e-2, "y error {err}");
}

#[test]
fn implicit_linear_step_is_exact() {
    let g = FnGenerator::new("minus y", 1, 1, false, |_, _, _, y, _, out| out[0] = -y[0]);
    let e = [1.0, -2.0, 0.5];
    let out = backward_step(&e, None, &[0.0; 3], &g, 0, 0.0, 0.1, StepMode::Implicit, &InnerIteration::default()).unwrap();
    for (y, e) in out.y.iter().zip(e) {
        let tol = InnerIteration::default().rel_tol;
        assert!((y - e / 1.1).abs() <= 10.0 * tol * (1.0 + e.abs()));
    }
    let zero = FnGenerator::zero(1, 1);
    let out = backward_step(&e, None, &[0.0; 3], &zero, 0, 0.0, 0.1, StepMode::Explicit, &InnerIteration::default()).unwrap();
    assert_eq!(out.y, e.to_vec());
}

#[test]
fn implicit_step_reports_nonconvergence() {
    let g = FnGenerator::new("stiff", 1, 1, false, |_, _, _, y, _, out| out[0] = -100.0 * y[0]);
    let r = backward_step(&[1.0, 1.0], None, &[0.0; 2], &g, 3, 0.0, 0.1, StepMode::Implicit, &InnerIteration::default());
    assert!(matches!(r, Err(bsde_core::Error::StepNonConvergence { step: 3, paths: 2 })));
}

#[test]
fn drift_oracle_picard() {
    let b = 0.25;
    let ens = ensemble(50, 10_000, 11);
    let g = Arc::new(FnGenerator::new("b z", 1, 1, true, move |_, _, _, _, z, out| out[0] = b * z[0]));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |x, out| out[0] = x[0]).unwrap();
    let (sol, report) = picard_solve(&problem, &PicardConfig::new(1e-6, 30, vec![0.5, 1.0])).unwrap();
    assert!(report.converged(), "{:?}", report.stop_reason);
    let err = sup_mean_abs_error(&sol, |p, i| ens.position(p, i)[0] + b * (1.0 - ens.grid().time(i)));
    assert!(err <= 5e-2, "y error {err}");
    assert!(time_avg_z_error(&sol, 1.0) <= 1e-1);
    let dist: Vec<f64> = report
        .iterations
        .iter()
        .map(|r| r.distance.s(0.5).unwrap() + r.distance.m(0.5).unwrap())
        .collect();
    for w in dist.windows(2).skip(1) {
        assert!(w[1] <= 0.9 * w[0], "{dist:?}");
    }
}

#[test]
fn z_independent_picard_stalls_after_one_iteration() {
    let ens = ensemble(20, 2_000, 12);
    let g = Arc::new(FnGenerator::new("minus y", 1, 1, false, |_, _, _, y, _, out| out[0] = -y[0]));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |x, out| out[0] = x[0].sin()).unwrap();
    let (sol, report) = picard_solve(&problem, &PicardConfig::new(1e-6, 5, vec![0.5])).unwrap();
    assert_eq!(report.effective_iterations, 1);
    assert_eq!(report.iterations.len(), 2);
    let residual = sol.steps.iter().map(|s| s.expectation_residual).fold(0.0, f64::max);
    assert!(report.iterations[1].distance.s(0.5).unwrap() <= 2.0 * residual);
    let inner = problem.inner.rel_tol;
    assert!(report.iterations[1].distance.s(0.5).unwrap() <= 10.0 * inner.sqrt());
}

#[test]
fn truncation_ladder_bounds_hold_exactly() {
    let ens = ensemble(20, 500, 13);
    let g = Arc::new(FnGenerator::new("big free term", 1, 1, false, |_, _, t, y, _, out| {
        out[0] = 40.0 * (1.0 + t) - y[0]
    }));
    let problem = BsdeProblem::with_terminal_fn(g, Arc::clone(&ens), |x, out| out[0] = 30.0 * x[0]).unwrap();
    for n in [1, 5, 25] {
        let audit = audit_truncation_ladder(&problem, n).unwrap();
        assert!(audit.terminal_ok && audit.free_term_ok, "{audit:?}");
    }
    let (xi, gn) = truncation_ladder(&problem, 1000).unwrap();
    assert_eq!(xi, problem.terminal);
    let mut out = [0.0];
    gn.eval(0, 0, 0.5, &[0.0], &[0.0], &mut out);
    assert!((out[0] - 60.0).abs() < 1e-12);
    let (_, gn) = truncation_ladder(&problem, 10).unwrap();
    gn.eval(0, 0, 0.5, &[0.0], &[0.0], &mut out);
    assert!((out[0] - 10.0 * (-0.5f64).exp()).abs() < 1e-12);
}

#[test]
fn discrete_equation_residual_within_regression_error() {
    let ens = ensemble(25, 5_000, 14);
    let g = Arc::new(FnGenerator::new("cos y", 1, 1, false, |_, _, _, y, _, out| out[0] = y[0].cos()));
    let problem = BsdeProblem::with_terminal_fn(g.clone(), Arc::clone(&ens), |x, out| out[0] = x[0].max(0.0)).unwrap();
    let sol = solve_z_independent(&problem).unwrap();
    let grid = ens.grid();
    for i in 0..grid.steps() {
        let mut res = Vec::new();
        for p in 0..ens.paths() {
            let mut gv = [0.0];
            g.eval(p, i, grid.time(i), sol.y.at(p, i), sol.z.at(p, i), &mut gv);
            let r = sol.y.scalar(p, i) - sol.y.scalar(p, i + 1) - gv[0] * grid.dt(i)
                + sol.z.scalar(p, i) * ens.increment(p, i)[0];
            res.push(r.abs());
        }
        assert!(mean(&res) <= sol.steps[i].expectation_residual + 1e-12);
    }
}
