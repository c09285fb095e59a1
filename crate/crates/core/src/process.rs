use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Per-path, per-node values of a process adapted to the Brownian filtration.
///
/// Storage is row-major `(path, node, component)` with `N + 1` nodes per path.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    grid: Arc<TimeGrid>,
    paths: usize,
    dim: usize,
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn zeros(grid: Arc<TimeGrid>, paths: usize, dim: usize) -> Self {
        let len = paths * (grid.steps() + 1) * dim;
        Self {
            grid,
            paths,
            dim,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(
        grid: Arc<TimeGrid>,
        paths: usize,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if paths == 0 || dim == 0 {
            return Err(Error::Argument("process needs paths >= 1 and dim >= 1".into()));
        }
        let expected = paths * (grid.steps() + 1) * dim;
        if values.len() != expected {
            return Err(Error::Argument(format!(
                "process value buffer has length {}, expected {expected}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite process value at flat index {pos}"
            )));
        }
        Ok(Self {
            grid,
            paths,
            dim,
            values,
        })
    }

    /// Builds a process by evaluating `f(path, node, out)` everywhere.
    pub fn from_fn<F>(grid: Arc<TimeGrid>, paths: usize, dim: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, &mut [f64]),
    {
        let mut p = Self::zeros(grid, paths, dim);
        let nodes = p.grid.steps() + 1;
        for path in 0..paths {
            for i in 0..nodes {
                let off = (path * nodes + i) * dim;
                f(path, i, &mut p.values[off..off + dim]);
            }
        }
        p
    }

    /// Constant-in-time process equal to `value` on every path.
    pub fn constant(grid: Arc<TimeGrid>, paths: usize, value: &[f64]) -> Self {
        let dim = value.len();
        Self::from_fn(grid, paths, dim, |_, _, out| out.copy_from_slice(value))
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    #[inline]
    pub fn paths(&self) -> usize {
        self.paths
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.grid.steps() + 1
    }

    #[inline]
    pub fn at(&self, path: usize, node: usize) -> &[f64] {
        let off = (path * self.nodes() + node) * self.dim;
        &self.values[off..off + self.dim]
    }

    #[inline]
    pub fn at_mut(&mut self, path: usize, node: usize) -> &mut [f64] {
        let nodes = self.nodes();
        let off = (path * nodes + node) * self.dim;
        &mut self.values[off..off + self.dim]
    }

    /// Scalar view for `dim == 1` processes.
    #[inline]
    pub fn scalar(&self, path: usize, node: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[path * self.nodes() + node]
    }

    /// All node values of one path, flattened `(node, component)`.
    pub fn path(&self, path: usize) -> &[f64] {
        let len = self.nodes() * self.dim;
        &self.values[path * len..(path + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean norm of the value at `(path, node)`.
    #[inline]
    pub fn norm_at(&self, path: usize, node: usize) -> f64 {
        self.at(path, node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn same_layout(&self, other: &AdaptedProcess) -> bool {
        self.paths == other.paths && *self.grid == *other.grid
    }

    /// Pointwise difference `self - other`.
    pub fn difference(&self, other: &AdaptedProcess) -> Result<AdaptedProcess> {
        if !self.same_layout(other) || self.dim != other.dim {
            return Err(Error::Argument(
                "processes differ in grid, path count or dimension".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            paths: self.paths,
            dim: self.dim,
            values,
        })
    }

    /// Process with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> AdaptedProcess {
        Self {
            grid: Arc::clone(&self.grid),
            paths: self.paths,
            dim: self.dim,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Process restricted to a subset (or permutation) of paths.
    pub fn select_paths(&self, order: &[usize]) -> AdaptedProcess {
        let len = self.nodes() * self.dim;
        let mut values = Vec::with_capacity(order.len() * len);
        for &p in order {
            values.extend_from_slice(self.path(p));
        }
        Self {
            grid: Arc::clone(&self.grid),
            paths: order.len(),
            dim: self.dim,
            values,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_roundtrip() {
        let g = Arc::new(TimeGrid::uniform(1.0, 4).unwrap());
        let p = AdaptedProcess::from_fn(g, 3, 2, |path, i, out| {
            out[0] = path as f64;
            out[1] = i as f64;
        });
        assert_eq!(p.at(2, 3), &[2.0, 3.0]);
        assert_eq!(p.path(1).len(), 10);
        let q = p.scaled(2.0);
        let d = q.difference(&p).unwrap();
        assert_eq!(d, p);
        let s = p.select_paths(&[2, 0]);
        assert_eq!(s.at(0, 1), &[2.0, 1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let g = Arc::new(TimeGrid::uniform(1.0, 1).unwrap());
        assert!(AdaptedProcess::from_values(g, 1, 1, vec![0.0, f64::NAN]).is_err());
    }
}
