use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulus::ModulusFunction;
use crate::numeric::stats::Estimate;
use crate::process::AdaptedProcess;
use crate::solver::{picard_solve, solve_z_independent, BsdeProblem, PicardConfig, ScaledGenerator, SolutionPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AprioriKind {
    A1,
    A2,
    A3,
}

impl AprioriKind {
    fn min_p(self) -> f64 {
        match self {
            AprioriKind::A1 => 0.0,
            AprioriKind::A2 | AprioriKind::A3 => 1.0,
        }
    }
}

/// Data of the structural bound on `g`. `psi` is the concave function of
/// the A2 bound or of the A3 bound; `phi` is the additive process of A1.
/// Missing processes are taken as zero.
#[derive(Debug, Clone, Default)]
pub struct AprioriData {
    pub m_const: f64,
    pub mu: Option<AdaptedProcess>,
    pub f: Option<AdaptedProcess>,
    pub phi: Option<AdaptedProcess>,
    pub psi: Option<ModulusFunction>,
}

impl AprioriData {
    /// `(ξ, f, φ) ↦ (sξ, sf, s²φ)` companion data.
    fn scaled(&self, s: f64) -> AprioriData {
        AprioriData {
            m_const: self.m_const,
            mu: self.mu.clone(),
            f: self.f.as_ref().map(|f| f.scaled(s)),
            phi: self.phi.as_ref().map(|p| p.scaled(s * s)),
            psi: self.psi.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub kind: AprioriKind,
    pub p: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

fn check_process(name: &str, x: &AdaptedProcess, y: &AdaptedProcess) -> Result<()> {
    if x.dim() != 1 || !x.same_layout(y) {
        return Err(Error::Argument(format!("{name} must be a scalar process aligned with y")));
    }
    Ok(())
}

/// Left-endpoint `Σ_i x_i Δt_i` along one path, or 0 for a missing process.
fn path_integral(x: Option<&AdaptedProcess>, path: usize, y: &AdaptedProcess) -> f64 {
    let Some(x) = x else { return 0.0 };
    let grid = y.grid();
    (0..grid.steps()).map(|i| x.scalar(path, i) * grid.dt(i)).sum()
}

/// Ratio of the left side to the bracketed right side of an a priori
/// estimate at `u = t = 0`, without its unspecified constant.
pub fn apriori_check(
    solution: &SolutionPair,
    problem: &BsdeProblem,
    p: f64,
    kind: AprioriKind,
    data: &AprioriData,
) -> Result<AprioriReport> {
    if !(p > kind.min_p()) || !p.is_finite() {
        return Err(Error::Domain(format!("p = {p} is out of range for {kind:?}")));
    }
    if !(data.m_const >= 0.0) {
        return Err(Error::Domain("M must be nonnegative".into()));
    }
    let (y, z) = (&solution.y, &solution.z);
    if y.paths() != problem.paths() || y.grid() != problem.ensemble.grid() {
        return Err(Error::Argument("solution is not on the problem's ensemble".into()));
    }
    for (name, x) in [("mu", &data.mu), ("f", &data.f), ("phi", &data.phi)] {
        if let Some(x) = x {
            check_process(name, x, y)?;
        }
    }
    if matches!(kind, AprioriKind::A2 | AprioriKind::A3) && data.psi.is_none() && data.mu.is_some() {
        return Err(Error::Argument("A2/A3 need a concave function when mu is given".into()));
    }
    let grid = y.grid();
    let n = grid.steps();
    let m = y.paths();
    let mut lhs = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for path in 0..m {
        let sup_y = (0..=n).map(|i| y.norm_at(path, i)).fold(0.0, f64::max).powf(p);
        let energy: f64 = (0..n).map(|i| z.norm_at(path, i).powi(2) * grid.dt(i)).sum();
        let z_term = energy.powf(p / 2.0);
        let f_term = path_integral(data.f.as_ref(), path, y).powf(p);
        let xi = problem.terminal_at(path).iter().map(|v| v * v).sum::<f64>().sqrt().powf(p);
        let mu_term = || -> f64 {
            match (&data.mu, &data.psi) {
                (Some(mu), Some(psi)) => (0..n)
                    .map(|i| mu.scalar(path, i) * psi.eval(y.norm_at(path, i).powf(p)) * grid.dt(i))
                    .sum(),
                _ => 0.0,
            }
        };
        match kind {
            AprioriKind::A1 => {
                lhs.push(z_term);
                let phi_term = path_integral(data.phi.as_ref(), path, y).max(0.0).powf(p / 2.0);
                rhs.push((1.0 + data.m_const).powf(p / 2.0) * sup_y + f_term + phi_term);
            }
            AprioriKind::A2 => {
                lhs.push(sup_y);
                rhs.push(xi + mu_term() + f_term);
            }
            AprioriKind::A3 => {
                lhs.push(sup_y + z_term);
                rhs.push(xi + mu_term() + f_term);
            }
        }
    }
    let lhs = Estimate::from_samples(&lhs);
    let rhs = Estimate::from_samples(&rhs);
    let degenerate = rhs.mean == 0.0;
    Ok(AprioriReport {
        kind,
        p,
        lhs,
        rhs,
        ratio: (!degenerate).then(|| lhs.mean / rhs.mean),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: AprioriKind,
    pub p: f64,
    pub scales: Vec<f64>,
    pub reports: Vec<AprioriReport>,
    /// Largest ratio across scalings.
    pub empirical_constant: Option<f64>,
    /// `max/min` of the ratios across scalings.
    pub spread: Option<f64>,
    pub passed: bool,
}

pub const DEFAULT_SCALES: [f64; 3] = [0.25, 1.0, 4.0];
pub const MAX_SPREAD: f64 = 10.0;

/// Solves with `(sξ, s·g(·/s))` for each scale and reruns [`apriori_check`]
/// with `f` scaled by `s` and `φ` by `s²`.
pub fn apriori_stability(
    problem: &BsdeProblem,
    p: f64,
    kind: AprioriKind,
    data: &AprioriData,
    scales: &[f64],
    picard: &PicardConfig,
) -> Result<StabilityReport> {
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Argument("scales must be positive and finite".into()));
    }
    let mut reports = Vec::with_capacity(scales.len());
    for &s in scales {
        let mut scaled = problem.with_generator(Arc::new(ScaledGenerator::new(problem.generator.clone(), s)));
        scaled.terminal.iter_mut().for_each(|x| *x *= s);
        let solution = if scaled.generator.depends_on_z() {
            picard_solve(&scaled, picard)?.0
        } else {
            solve_z_independent(&scaled)?
        };
        reports.push(apriori_check(&solution, &scaled, p, kind, &data.scaled(s))?);
    }
    let ratios: Option<Vec<f64>> = reports.iter().map(|r| r.ratio).collect();
    let (empirical_constant, spread) = match &ratios {
        Some(r) => {
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = r.iter().copied().fold(f64::INFINITY, f64::min);
            (Some(max), Some(if min > 0.0 { max / min } else { f64::INFINITY }))
        }
        None => (None, None),
    };
    Ok(StabilityReport {
        kind,
        p,
        scales: scales.to_vec(),
        reports,
        empirical_constant,
        spread,
        passed: spread.is_some_and(|s| s <= MAX_SPREAD),
    })
}
