use bsde_core::examples::ExampleProblem;
use bsde_core::paths::CoefficientAudit;
use bsde_core::solver::{audit_truncation_ladder, LadderAudit};
use bsde_core::verifiers::{check_h1, check_h2, check_h3, check_h4, check_h5, AssumptionReport, Verdict};
use serde::Serialize;

use crate::config::{CheckConfig, RunConfig};
use crate::error::AppError;
use crate::output::Output;
use crate::solve::build;

#[derive(Debug, Serialize)]
pub struct NamedAudit {
    pub coefficient: &'static str,
    pub audit: CoefficientAudit,
    pub passed: bool,
}

/// Reports of the five assumption checks; `None` where the problem declares
/// no coefficient for that check.
pub struct Suite {
    pub reports: Vec<(&'static str, Option<AssumptionReport>)>,
    pub coefficients: Vec<NamedAudit>,
    pub ladder: Vec<LadderAudit>,
}

impl Suite {
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .reports
            .iter()
            .filter_map(|(name, r)| r.as_ref().filter(|r| r.verdict == Verdict::Violated).map(|_| name.to_string()))
            .collect();
        v.extend(self.coefficients.iter().filter(|a| !a.passed).map(|a| format!("{} audit", a.coefficient)));
        v.extend(
            self.ladder
                .iter()
                .filter(|l| !(l.terminal_ok && l.free_term_ok))
                .map(|l| format!("truncation level {}", l.level)),
        );
        v
    }
}

pub fn suite(ex: &ExampleProblem, cfg: &CheckConfig) -> Result<Suite, AppError> {
    let problem = &ex.problem;
    let g = problem.generator.as_ref();
    let c = &problem.coefficients;
    let s = &cfg.sampler;
    let h1 = match (&c.u, &problem.modulus) {
        (Some(u), Some(rho)) => Some(check_h1(g, u, rho, s)?),
        _ => None,
    };
    let h2 = Some(check_h2(g, problem.ensemble.grid(), problem.paths(), &cfg.h2_radii, s)?);
    let h3 = match &c.v {
        Some(v) => Some(check_h3(g, v, s)?),
        None => None,
    };
    let h4 = match (&c.gamma, problem.alpha, &c.g1, &c.g2) {
        (Some(gamma), Some(alpha), Some(g1), Some(g2)) => Some(check_h4(g, gamma, alpha, g1, g2, s)?),
        _ => None,
    };
    let h5 = Some(check_h5(&problem.terminal, g, problem.ensemble.grid(), problem.paths())?);
    let mut coefficients = Vec::new();
    for (name, coeff) in [("u", &c.u), ("v", &c.v), ("gamma", &c.gamma)] {
        if let Some(coeff) = coeff {
            let audit = coeff.audit();
            coefficients.push(NamedAudit {
                coefficient: name,
                passed: audit.passed(),
                audit,
            });
        }
    }
    let ladder = cfg
        .ladder_levels
        .iter()
        .map(|&n| audit_truncation_ladder(problem, n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Suite {
        reports: vec![("h1", h1), ("h2", h2), ("h3", h3), ("h4", h4), ("h5", h5)],
        coefficients,
        ladder,
    })
}

#[derive(Serialize)]
struct Skipped<'a> {
    assumption: &'a str,
    verdict: &'static str,
    reason: &'static str,
}

pub fn write_suite(out: &mut Output, suite: &Suite) -> Result<(), AppError> {
    for (name, report) in &suite.reports {
        let file = format!("{name}.json");
        match report {
            Some(r) => out.json(&file, r)?,
            None => out.json(
                &file,
                &Skipped {
                    assumption: name,
                    verdict: "skipped",
                    reason: "no coefficient declared for this check",
                },
            )?,
        }
    }
    out.json("coefficient_audits.json", &suite.coefficients)?;
    out.json("ladder_audits.json", &suite.ladder)
}

pub fn run(cfg: &RunConfig, out: &mut Output) -> Result<(), AppError> {
    let ex = build(cfg, &cfg.problem, cfg.grid.steps, cfg.ensemble.paths)?;
    let suite = suite(&ex, &cfg.check)?;
    write_suite(out, &suite)?;
    let bad = suite.violations();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(AppError::Violation(format!("violations found in: {}", bad.join(", "))))
    }
}
