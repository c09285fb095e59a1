use bsde_core::verifiers::InequalityConfig;

use crate::cases::{run_case, CaseSettings};
use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::{variant_name, Cell, Output};

pub fn run(cfg: &RunConfig, out: &mut Output) -> Result<(), AppError> {
    let settings = CaseSettings {
        horizon: cfg.problem.horizon,
        steps: cfg.grid.steps,
        paths: cfg.ensemble.paths,
        seed: cfg.seed,
        instances: cfg.ineq.instances,
        ineq: InequalityConfig {
            abs_tol: cfg.ineq.abs_tol,
            rel_tol: cfg.ineq.rel_tol,
            ..InequalityConfig::default()
        },
    };
    let outcomes = cfg
        .ineq
        .cases
        .iter()
        .map(|c| run_case(*c, &settings))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = outcomes
        .iter()
        .map(|o| {
            vec![
                Cell::Text(variant_name(&o.case)),
                Cell::Text(o.expected_pass.to_string()),
                Cell::Text(o.verified.to_string()),
                Cell::Text(o.as_expected.to_string()),
                Cell::from(o.reports.len()),
            ]
        })
        .collect();
    out.csv("ineq.csv", &["case", "expected_pass", "verified", "as_expected", "reports"], rows)?;
    out.json("ineq.json", &outcomes)?;
    let bad: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.as_expected)
        .map(|o| variant_name(&o.case))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(AppError::Violation(format!("unexpected verdicts in: {}", bad.join(", "))))
    }
}
