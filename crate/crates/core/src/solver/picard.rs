use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{beta_moments, class_d_norm, compute_norms, pathwise_energy, pathwise_sup, BetaEstimate};
use crate::numeric::stats::Estimate;
use crate::process::AdaptedProcess;

use super::backward::backward_solve;
use super::generator::FrozenZGenerator;
use super::problem::{BsdeProblem, SolutionPair};

/// Distances between two solution pairs on the same ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    /// `E[sup_t |Δy_t|^β]`
    pub s_beta: Vec<BetaEstimate>,
    /// `E[(∫|Δz|² dt)^{β/2}]`
    pub m_beta: Vec<BetaEstimate>,
    /// `sup_t E|Δy_t|`
    pub class_d: Estimate,
}

impl DistanceRecord {
    pub fn s(&self, beta: f64) -> Option<f64> {
        self.s_beta.iter().find(|b| b.beta == beta).map(|b| b.estimate.mean)
    }

    pub fn m(&self, beta: f64) -> Option<f64> {
        self.m_beta.iter().find(|b| b.beta == beta).map(|b| b.estimate.mean)
    }
}

pub fn convergence_metrics(
    y_a: &AdaptedProcess,
    z_a: &AdaptedProcess,
    y_b: &AdaptedProcess,
    z_b: &AdaptedProcess,
    betas: &[f64],
) -> Result<DistanceRecord> {
    if betas.is_empty() {
        return Err(Error::Argument("beta list must not be empty".into()));
    }
    let dy = y_a.difference(y_b)?;
    let dz = z_a.difference(z_b)?;
    Ok(DistanceRecord {
        s_beta: beta_moments(&pathwise_sup(&dy), betas, false),
        m_beta: beta_moments(&pathwise_energy(&dz), betas, true),
        class_d: class_d_norm(&dy),
    })
}

/// Distances between two solutions.
pub fn solution_distance(a: &SolutionPair, b: &SolutionPair, betas: &[f64]) -> Result<DistanceRecord> {
    convergence_metrics(&a.y, &a.z, &b.y, &b.z, betas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ToleranceMet,
    MaxIterations,
    DivergenceDetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub distance: DistanceRecord,
    /// `max(max_β S_dist/(1+S_norm), max_β M_dist/(1+M_norm))`.
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub betas: Vec<f64>,
    pub tolerance: f64,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Iterations whose criterion was at or above the tolerance.
    pub effective_iterations: usize,
}

impl ConvergenceReport {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::ToleranceMet
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub betas: Vec<f64>,
    /// `(y⁰, z⁰)`; zero processes when absent.
    pub initial: Option<(AdaptedProcess, AdaptedProcess)>,
}

impl PicardConfig {
    pub fn new(tol: f64, max_iter: usize, betas: Vec<f64>) -> Self {
        Self {
            tol,
            max_iter,
            betas,
            initial: None,
        }
    }

    pub fn with_initial(mut self, y0: AdaptedProcess, z0: AdaptedProcess) -> Self {
        self.initial = Some((y0, z0));
        self
    }
}

const DIVERGENCE_RUN: usize = 3;

/// Picard iteration: stage `n` solves the BSDE with driver `g(s, y, z^{n−1}_s)`.
/// `y⁰` enters only through the first distance.
pub fn picard_solve(problem: &BsdeProblem, config: &PicardConfig) -> Result<(SolutionPair, ConvergenceReport)> {
    if !(config.tol > 0.0) {
        return Err(Error::Argument("tolerance must be positive".into()));
    }
    if config.max_iter == 0 {
        return Err(Error::Argument("max_iter must be at least 1".into()));
    }
    if config.betas.is_empty() {
        return Err(Error::Argument("beta list must not be empty".into()));
    }
    let grid = Arc::clone(problem.ensemble.grid_arc());
    let (m, k, kd) = (problem.paths(), problem.k(), problem.k() * problem.d());
    let (y0, z0) = match &config.initial {
        Some((y, z)) => {
            if y.paths() != m || y.dim() != k || z.paths() != m || z.dim() != kd || y.grid() != &*grid || z.grid() != &*grid {
                return Err(Error::Argument("initial guess does not match the problem layout".into()));
            }
            (y.clone(), z.clone())
        }
        None => (
            AdaptedProcess::zeros(Arc::clone(&grid), m, k),
            AdaptedProcess::zeros(Arc::clone(&grid), m, kd),
        ),
    };
    let mut prev_y = y0;
    let mut prev_z = Arc::new(z0);
    let mut records = Vec::new();
    let mut rising = 0;
    let mut stop = StopReason::MaxIterations;
    let mut current = None;
    for iteration in 1..=config.max_iter {
        let frozen = FrozenZGenerator::new(Arc::clone(&problem.generator), Arc::clone(&prev_z));
        let sol = backward_solve(problem, &frozen)?;
        let distance = convergence_metrics(&sol.y, &sol.z, &prev_y, &prev_z, &config.betas)?;
        let norms = compute_norms(&sol.y, &sol.z, &config.betas)?;
        let s_rel = distance
            .s_beta
            .iter()
            .zip(&norms.s_beta)
            .map(|(d, n)| d.estimate.mean / (1.0 + n.estimate.mean))
            .fold(0.0, f64::max);
        let m_rel = distance
            .m_beta
            .iter()
            .zip(&norms.m_beta)
            .map(|(d, n)| d.estimate.mean / (1.0 + n.estimate.mean))
            .fold(0.0, f64::max);
        let criterion = s_rel.max(m_rel);
        if let Some(last) = records.last().map(|r: &IterationRecord| r.criterion) {
            rising = if criterion > last { rising + 1 } else { 0 };
        }
        records.push(IterationRecord {
            iteration,
            distance,
            criterion,
        });
        prev_y = sol.y.clone();
        prev_z = Arc::new(sol.z.clone());
        current = Some(sol);
        if criterion < config.tol {
            stop = StopReason::ToleranceMet;
            break;
        }
        if rising >= DIVERGENCE_RUN {
            stop = StopReason::DivergenceDetected;
            break;
        }
    }
    let mut solution = current.expect("at least one iteration runs");
    solution.norms = compute_norms(&solution.y, &solution.z, &config.betas)?;
    let effective = records.iter().filter(|r| r.criterion >= config.tol).count();
    Ok((
        solution,
        ConvergenceReport {
            betas: config.betas.clone(),
            tolerance: config.tol,
            iterations: records,
            stop_reason: stop,
            effective_iterations: effective,
        },
    ))
}
