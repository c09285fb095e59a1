use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Time discretization `0 = t_0 < t_1 < ... < t_N = T` of a finite horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Argument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::Argument("grid needs at least one step".into()));
        }
        let h = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        nodes[steps] = horizon;
        Ok(Self { nodes })
    }

    /// Arbitrary strictly increasing nodes starting at zero.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Argument("grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Argument("first grid node must be 0".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::Argument("grid nodes must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Length of step `i`, i.e. `t_{i+1} - t_i`.
    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.horizon() / self.steps() as f64;
        (0..self.steps()).all(|i| (self.dt(i) - h).abs() <= 4.0 * f64::EPSILON * self.horizon())
    }
}
