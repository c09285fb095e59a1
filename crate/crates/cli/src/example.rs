use bsde_core::modulus::{condition_3_2_check, osgood_divergence_check, DivergenceReport};
use serde::Serialize;

use crate::check::{suite, write_suite};
use crate::config::RunConfig;
use crate::error::AppError;
use crate::output::{variant_name, Output};
use crate::solve::build;

const EPS_MIN: f64 = 1e-300;

#[derive(Serialize)]
struct ExampleAudit<'a> {
    problem: &'static str,
    k: usize,
    d: usize,
    alpha: Option<f64>,
    p_bar: Option<f64>,
    barrier: Option<f64>,
    osgood: Option<DivergenceReport>,
    condition_3_2: Option<DivergenceReport>,
    assumption_verdicts: Vec<(&'a str, Option<String>)>,
    violations: &'a [String],
}

/// Builds a worked example and audits it end to end.
pub fn run(cfg: &RunConfig, out: &mut Output) -> Result<(), AppError> {
    let ex = build(cfg, &cfg.problem, cfg.grid.steps, cfg.ensemble.paths)?;
    let problem = &ex.problem;
    let s = suite(&ex, &cfg.check)?;
    write_suite(out, &s)?;
    let osgood = match &problem.modulus {
        Some(rho) => Some(osgood_divergence_check(rho, EPS_MIN)?),
        None => None,
    };
    let condition_3_2 = match (&problem.modulus, problem.p_bar) {
        (Some(rho), Some(p)) => Some(condition_3_2_check(rho, p, EPS_MIN)?),
        _ => None,
    };
    let mut violations = s.violations();
    if osgood.as_ref().is_some_and(|r| !r.diverges) {
        violations.push("osgood divergence".into());
    }
    if condition_3_2.as_ref().is_some_and(|r| !r.diverges) {
        violations.push("integral condition on rho with p_bar".into());
    }
    let verdicts = s
        .reports
        .iter()
        .map(|(name, r)| (*name, r.as_ref().map(|r| variant_name(&r.verdict))))
        .collect();
    out.json(
        "example.json",
        &ExampleAudit {
            problem: cfg.problem.id.name(),
            k: problem.k(),
            d: problem.d(),
            alpha: problem.alpha,
            p_bar: problem.p_bar,
            barrier: problem.barrier,
            osgood,
            condition_3_2,
            assumption_verdicts: verdicts,
            violations: &violations,
        },
    )?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(AppError::Violation(format!("violations found in: {}", violations.join(", "))))
    }
}
