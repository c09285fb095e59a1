//! Monte Carlo estimates of the S^β, M^β, class-(D) and H¹ functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stats::{sorted_sum, Estimate};
use crate::process::AdaptedProcess;

pub const DEFAULT_BETAS: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `E[sup_t |Y_t|^β]`
    pub s_beta: Vec<BetaEstimate>,
    /// `E[(∫|Z|² dt)^{β/2}]`
    pub m_beta: Vec<BetaEstimate>,
    /// `sup_t E|Y_t|`
    pub class_d: Estimate,
    /// `E[∫|f| dt]` for an optional driver process.
    pub h_one: Option<Estimate>,
}

impl NormReport {
    pub fn s(&self, beta: f64) -> Option<Estimate> {
        self.s_beta.iter().find(|b| b.beta == beta).map(|b| b.estimate)
    }

    pub fn m(&self, beta: f64) -> Option<Estimate> {
        self.m_beta.iter().find(|b| b.beta == beta).map(|b| b.estimate)
    }
}

/// Per-path `sup_t |Y_t|` over all grid nodes.
pub fn pathwise_sup(y: &AdaptedProcess) -> Vec<f64> {
    (0..y.paths())
        .map(|p| (0..y.nodes()).map(|i| y.norm_at(p, i)).fold(0.0, f64::max))
        .collect()
}

/// Per-path left-endpoint `∫₀ᵀ |Z_t|² dt`.
pub fn pathwise_energy(z: &AdaptedProcess) -> Vec<f64> {
    let grid = z.grid();
    (0..z.paths())
        .map(|p| {
            (0..grid.steps())
                .map(|i| {
                    let n = z.norm_at(p, i);
                    n * n * grid.dt(i)
                })
                .sum()
        })
        .collect()
}

/// `sup_t E|Y_t|`; the reported standard error belongs to the maximizing node.
pub fn class_d_norm(y: &AdaptedProcess) -> Estimate {
    let mut best = Estimate::ZERO;
    let mut col = vec![0.0; y.paths()];
    for i in 0..y.nodes() {
        for (p, c) in col.iter_mut().enumerate() {
            *c = y.norm_at(p, i);
        }
        let e = Estimate::from_samples(&col);
        if e.mean > best.mean {
            best = e;
        }
    }
    best
}

/// `E[∫₀ᵀ |f_t| dt]` with the left-endpoint rule.
pub fn h_one_norm(f: &AdaptedProcess) -> Estimate {
    let grid = f.grid();
    let per: Vec<f64> = (0..f.paths())
        .map(|p| sorted_sum(&(0..grid.steps()).map(|i| f.norm_at(p, i) * grid.dt(i)).collect::<Vec<_>>()))
        .collect();
    Estimate::from_samples(&per)
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::Argument("beta list must not be empty".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return Err(Error::Argument(format!("beta must be positive, got {b}")));
    }
    Ok(())
}

pub(crate) fn beta_moments(samples: &[f64], betas: &[f64], half: bool) -> Vec<BetaEstimate> {
    betas
        .iter()
        .map(|&beta| {
            let e = if half { beta / 2.0 } else { beta };
            let powered: Vec<f64> = samples.iter().map(|s| s.powf(e)).collect();
            BetaEstimate {
                beta,
                estimate: Estimate::from_samples(&powered),
            }
        })
        .collect()
}

pub fn compute_norms(y: &AdaptedProcess, z: &AdaptedProcess, betas: &[f64]) -> Result<NormReport> {
    check_betas(betas)?;
    if y.paths() != z.paths() || y.grid() != z.grid() {
        return Err(Error::Argument("Y and Z must share grid and paths".into()));
    }
    let sup = pathwise_sup(y);
    let energy = pathwise_energy(z);
    Ok(NormReport {
        s_beta: beta_moments(&sup, betas, false),
        m_beta: beta_moments(&energy, betas, true),
        class_d: class_d_norm(y),
        h_one: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use std::sync::Arc;

    #[test]
    fn zero_processes() {
        let g = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
        let y = AdaptedProcess::zeros(Arc::clone(&g), 5, 2);
        let z = AdaptedProcess::zeros(g, 5, 2);
        let r = compute_norms(&y, &z, &DEFAULT_BETAS).unwrap();
        assert!(r.s_beta.iter().chain(&r.m_beta).all(|b| b.estimate.mean == 0.0));
        assert_eq!(r.class_d.mean, 0.0);
        assert!(compute_norms(&y, &z, &[]).is_err());
    }

    #[test]
    fn unit_z_energy() {
        let g = Arc::new(TimeGrid::uniform(2.0, 40).unwrap());
        let y = AdaptedProcess::zeros(Arc::clone(&g), 3, 1);
        let z = AdaptedProcess::constant(g, 3, &[1.0]);
        let r = compute_norms(&y, &z, &[0.5, 1.0]).unwrap();
        assert!((r.m(0.5).unwrap().mean - 2f64.powf(0.25)).abs() < 1e-12);
        assert!((r.m(1.0).unwrap().mean - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_y() {
        let g = Arc::new(TimeGrid::uniform(1.0, 4).unwrap());
        let y = AdaptedProcess::constant(Arc::clone(&g), 3, &[3.0, 4.0]);
        let z = AdaptedProcess::zeros(g, 3, 1);
        let r = compute_norms(&y, &z, &[0.5]).unwrap();
        assert!((r.s(0.5).unwrap().mean - 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.class_d.mean, 5.0);
    }
}
