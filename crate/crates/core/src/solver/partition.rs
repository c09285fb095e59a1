use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::CoefficientProcess;

/// Per-path stopping-time partition `0 = T_0 <= T_1 <= … <= T_N = T` of the
/// grid, as node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub p: f64,
    pub parts: usize,
    /// Level `K`; `T_j` is the first node where `(∫₀ᵗ v²)^{p/2} >= jK/N`.
    pub level: f64,
    pub indices: Vec<Vec<usize>>,
    pub audit: PartitionAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    /// Paths where every increment of `(∫₀ᵗ v²)^{p/2}` over a sub-interval is
    /// at most `K/N` plus that path's one-step overshoot.
    pub paths_within_bound: usize,
    pub paths: usize,
    /// Largest increment minus `K/N` over all paths and sub-intervals.
    pub max_excess: f64,
    /// Largest one-step overshoot `max_i (v_i² Δt_i)^{p/2}`.
    pub max_overshoot: f64,
}

impl PartitionAudit {
    pub fn passed(&self) -> bool {
        self.paths_within_bound == self.paths
    }
}

/// Splits each path's horizon into `parts` stopping-time intervals of equal
/// `(∫ v² dt)^{p/2}` mass. `declared_bound` is an essential-sup bound on
/// `∫₀ᵀ v² dt`; without one the empirical maximum over paths is used.
pub fn interval_partition(
    v: &CoefficientProcess,
    p: f64,
    parts: usize,
    declared_bound: Option<f64>,
) -> Result<IntervalPartition> {
    if parts == 0 {
        return Err(Error::Argument("need at least one sub-interval".into()));
    }
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::Domain(format!("p must lie in (1, 2), got {p}")));
    }
    let process = &v.process;
    let grid = process.grid();
    let n = grid.steps();
    let half = p / 2.0;
    let cumulative: Vec<Vec<f64>> = (0..process.paths())
        .map(|path| {
            let mut c = Vec::with_capacity(n + 1);
            c.push(0.0);
            for i in 0..n {
                let x = process.scalar(path, i);
                c.push(c[i] + x * x * grid.dt(i));
            }
            c
        })
        .collect();
    let total = match declared_bound {
        Some(b) if b >= 0.0 => b,
        Some(b) => return Err(Error::Domain(format!("declared bound must be nonnegative, got {b}"))),
        None => cumulative.iter().map(|c| c[n]).fold(0.0, f64::max),
    };
    let level = total.powf(half);
    let mut indices = Vec::with_capacity(cumulative.len());
    let mut within = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_overshoot: f64 = 0.0;
    for (path, c) in cumulative.iter().enumerate() {
        let mut t = Vec::with_capacity(parts + 1);
        t.push(0);
        let mut i = 0;
        for j in 1..parts {
            let threshold = j as f64 * level / parts as f64;
            while i < n && c[i].powf(half) < threshold {
                i += 1;
            }
            t.push(i);
        }
        t.push(n);
        let overshoot = (0..n)
            .map(|i| {
                let x = process.scalar(path, i);
                (x * x * grid.dt(i)).powf(half)
            })
            .fold(0.0, f64::max);
        max_overshoot = max_overshoot.max(overshoot);
        let mut ok = true;
        for w in t.windows(2) {
            let inc = c[w[1]].powf(half) - c[w[0]].powf(half);
            let excess = inc - level / parts as f64;
            max_excess = max_excess.max(excess);
            ok &= excess <= overshoot * (1.0 + 1e-12) + 1e-15;
        }
        within += usize::from(ok);
        indices.push(t);
    }
    Ok(IntervalPartition {
        p,
        parts,
        level,
        audit: PartitionAudit {
            paths_within_bound: within,
            paths: cumulative.len(),
            max_excess,
            max_overshoot,
        },
        indices,
    })
}
