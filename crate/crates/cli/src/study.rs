use bsde_core::numeric::Estimate;

use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::{variant_name, Cell, Output};
use crate::solve::{build, oracle_errors, run_solver};

/// Refinement sweep over `(N, M)`; a failed cell is recorded and the sweep
/// continues.
pub fn run(cfg: &RunConfig, out: &mut Output) -> Result<(), AppError> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.study.steps {
        for &m in &cfg.study.paths {
            let ex = build(cfg, &cfg.problem, n, m)?;
            match run_solver(&ex, &cfg.solver) {
                Ok((sol, report)) => {
                    let y0: Vec<f64> = (0..m).map(|p| sol.y.at(p, 0)[0]).collect();
                    let est = Estimate::from_samples(&y0);
                    let errors = oracle_errors(&cfg.problem, &ex.problem.ensemble, &sol);
                    let status = match &report {
                        Some(r) if !r.converged() => {
                            failures.push(format!("N={n} M={m}"));
                            variant_name(&r.stop_reason)
                        }
                        _ => "ok".into(),
                    };
                    rows.push(vec![
                        Cell::from(n),
                        Cell::from(m),
                        Cell::Text(status),
                        Cell::from(est.mean),
                        Cell::from(est.std_error),
                        Cell::from(errors.as_ref().map(|e| e.y_sup())),
                        Cell::from(errors.as_ref().map(|e| e.z_time_avg())),
                        report.as_ref().map_or(Cell::Empty, |r| Cell::from(r.iteration_count())),
                    ]);
                }
                Err(AppError::NonConvergence(msg)) => {
                    failures.push(format!("N={n} M={m}: {msg}"));
                    let mut row = vec![Cell::from(n), Cell::from(m), Cell::Text("step-nonconvergence".into())];
                    row.extend((0..5).map(|_| Cell::Empty));
                    rows.push(row);
                }
                Err(e) => return Err(e),
            }
        }
    }
    out.csv(
        "study.csv",
        &["steps", "paths", "status", "y0_mean", "y0_stderr", "y_sup_mean_abs_error", "z_time_avg_abs_error", "iterations"],
        rows,
    )?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(AppError::NonConvergence(failures.join("; ")))
    }
}
