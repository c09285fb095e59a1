use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stats::Estimate;
use crate::paths::CoefficientProcess;
use crate::process::AdaptedProcess;

/// Monte Carlo estimate of `E[∫₀ᵀ u_t |y_t| dt]`, left-endpoint rule.
pub fn condition_3_4_estimate(u: &CoefficientProcess, y: &AdaptedProcess) -> Result<Estimate> {
    if u.paths() != y.paths() || u.process.grid() != y.grid() {
        return Err(Error::Argument("u and y must share the ensemble".into()));
    }
    let grid = y.grid();
    let samples: Vec<f64> = (0..y.paths())
        .map(|p| (0..grid.steps()).map(|i| u.value(p, i) * y.norm_at(p, i) * grid.dt(i)).sum())
        .collect();
    Ok(Estimate::from_samples(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDPoint {
    pub lambda: f64,
    pub value: Estimate,
    /// Member of the stopping family attaining the sup, e.g. `t_12` or `hit(2.5)`.
    pub attained_by: String,
    /// Sup over the deterministic nodes alone.
    pub deterministic: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDCurve {
    pub points: Vec<ClassDPoint>,
    pub family_size: usize,
    pub nonincreasing: bool,
}

/// `λ ↦ sup_τ E[|Y_τ| 1{|Y_τ| > λ}]` over the grid nodes and the first
/// grid times at which `|Y|` reaches each `λ` (capped at `T`).
#[allow(non_snake_case)]
pub fn class_D_diagnostic(y: &AdaptedProcess, lambdas: &[f64]) -> Result<ClassDCurve> {
    if lambdas.is_empty()
        || lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite())
        || lambdas.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Argument("thresholds must be positive and increasing".into()));
    }
    let (m, nodes) = (y.paths(), y.nodes());
    let norms: Vec<f64> = (0..m).flat_map(|p| (0..nodes).map(move |i| (p, i))).map(|(p, i)| y.norm_at(p, i)).collect();
    // |Y_τ| per path for each member of the family
    let mut family: Vec<(String, Vec<f64>)> = (0..nodes)
        .map(|i| (format!("t_{i}"), (0..m).map(|p| norms[p * nodes + i]).collect()))
        .collect();
    for &level in lambdas {
        let stopped = (0..m)
            .map(|p| {
                let row = &norms[p * nodes..(p + 1) * nodes];
                row.iter().copied().find(|v| *v >= level).unwrap_or(row[nodes - 1])
            })
            .collect();
        family.push((format!("hit({level})"), stopped));
    }
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let values: Vec<Estimate> = family
            .iter()
            .map(|(_, stopped)| {
                let tail: Vec<f64> = stopped.iter().map(|v| if *v > lambda { *v } else { 0.0 }).collect();
                Estimate::from_samples(&tail)
            })
            .collect();
        let argmax = |range: std::ops::Range<usize>| {
            range.fold(0, |b, j| if values[j].mean > values[b].mean { j } else { b })
        };
        let best = argmax(0..family.len());
        points.push(ClassDPoint {
            lambda,
            value: values[best],
            attained_by: family[best].0.clone(),
            deterministic: values[argmax(0..nodes)],
        });
    }
    let nonincreasing = points.windows(2).all(|w| w[1].value.mean <= w[0].value.mean);
    Ok(ClassDCurve {
        points,
        family_size: family.len(),
        nonincreasing,
    })
}
