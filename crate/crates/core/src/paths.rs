//! Brownian path ensembles, grid stopping times and the truncated stochastic
//! coefficient processes built from them.
//!
//! Increments are drawn from counter-based ChaCha substreams keyed by
//! `(seed, path)` with the word position fixed by `(step, component)`, so an
//! ensemble never depends on how paths are scheduled across workers.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::AdaptedProcess;

/// Magic tag of the binary ensemble dump (`"BSDEPATH"` read little-endian).
pub const DUMP_MAGIC: u64 = u64::from_le_bytes(*b"BSDEPATH");
pub const DUMP_VERSION: u64 = 1;

/// `M` Brownian paths of dimension `d` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    grid: Arc<TimeGrid>,
    paths: usize,
    dim: usize,
    seed: u64,
    /// `(path, step, component)`
    increments: Vec<f64>,
    /// `(path, node, component)`
    positions: Vec<f64>,
    /// Left-endpoint `∫₀^{t_i} |B_s| ds`, `(path, node)`.
    running_abs: Vec<f64>,
    /// Left-endpoint `∫₀^{t_i} |B_s|² ds`, `(path, node)`.
    running_sq: Vec<f64>,
}

fn uniform_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn substream(seed: u64, path: usize, first_step: usize, dim: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    // two 32-bit words per u64 draw
    rng.set_word_pos((first_step as u128) * (dim as u128) * 2);
    rng
}

fn alloc(paths: usize, steps: usize, dim: usize) -> Result<Vec<f64>> {
    let elements = (paths as u128) * ((steps + 1) as u128) * (dim as u128);
    let cap = Error::Capacity {
        paths,
        steps,
        dim,
        elements,
    };
    if elements > (isize::MAX as u128) / 8 {
        return Err(cap);
    }
    let mut v = Vec::new();
    v.try_reserve_exact(elements as usize).map_err(|_| cap)?;
    Ok(v)
}

impl PathEnsemble {
    /// Simulates `paths` independent `dim`-dimensional Brownian motions.
    pub fn simulate(grid: Arc<TimeGrid>, paths: usize, dim: usize, seed: u64) -> Result<Self> {
        if paths == 0 || dim == 0 {
            return Err(Error::Argument("need M >= 1 paths and d >= 1".into()));
        }
        let steps = grid.steps();
        let mut increments = alloc(paths, steps, dim)?;
        increments.resize(paths * steps * dim, 0.0);
        let normal = Normal::standard();
        increments
            .par_chunks_mut(steps * dim)
            .enumerate()
            .for_each(|(path, chunk)| {
                let mut rng = substream(seed, path, 0, dim);
                for step in 0..steps {
                    let sd = grid.dt(step).sqrt();
                    for c in 0..dim {
                        chunk[step * dim + c] = sd * normal.inverse_cdf(uniform_open(rng.next_u64()));
                    }
                }
            });
        Self::from_increments(grid, paths, dim, seed, increments)
    }

    /// Ensemble from explicit increments laid out `(path, step, component)`.
    pub fn from_increments(
        grid: Arc<TimeGrid>,
        paths: usize,
        dim: usize,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        let steps = grid.steps();
        if increments.len() != paths * steps * dim {
            return Err(Error::Argument(format!(
                "increment buffer has length {}, expected {}",
                increments.len(),
                paths * steps * dim
            )));
        }
        let nodes = steps + 1;
        let mut positions = alloc(paths, steps, dim)?;
        positions.resize(paths * nodes * dim, 0.0);
        positions
            .par_chunks_mut(nodes * dim)
            .enumerate()
            .for_each(|(path, pos)| {
                let inc = &increments[path * steps * dim..(path + 1) * steps * dim];
                for step in 0..steps {
                    for c in 0..dim {
                        pos[(step + 1) * dim + c] = pos[step * dim + c] + inc[step * dim + c];
                    }
                }
            });
        Ok(Self::with_positions(grid, paths, dim, seed, increments, positions))
    }

    /// Ensemble from explicit positions `(path, node, component)`; used to
    /// inject deterministic paths.
    pub fn from_positions(
        grid: Arc<TimeGrid>,
        paths: usize,
        dim: usize,
        positions: Vec<f64>,
    ) -> Result<Self> {
        let steps = grid.steps();
        let nodes = steps + 1;
        if positions.len() != paths * nodes * dim {
            return Err(Error::Argument("position buffer has wrong length".into()));
        }
        let mut increments = vec![0.0; paths * steps * dim];
        for path in 0..paths {
            for step in 0..steps {
                for c in 0..dim {
                    increments[(path * steps + step) * dim + c] = positions
                        [(path * nodes + step + 1) * dim + c]
                        - positions[(path * nodes + step) * dim + c];
                }
            }
        }
        Ok(Self::with_positions(grid, paths, dim, 0, increments, positions))
    }

    fn with_positions(
        grid: Arc<TimeGrid>,
        paths: usize,
        dim: usize,
        seed: u64,
        increments: Vec<f64>,
        positions: Vec<f64>,
    ) -> Self {
        let nodes = grid.steps() + 1;
        let mut running_abs = vec![0.0; paths * nodes];
        let mut running_sq = vec![0.0; paths * nodes];
        running_abs
            .par_chunks_mut(nodes)
            .zip(running_sq.par_chunks_mut(nodes))
            .enumerate()
            .for_each(|(path, (ra, rs))| {
                for i in 0..nodes - 1 {
                    let b = &positions[(path * nodes + i) * dim..(path * nodes + i + 1) * dim];
                    let sq: f64 = b.iter().map(|x| x * x).sum();
                    let dt = grid.dt(i);
                    ra[i + 1] = ra[i] + sq.sqrt() * dt;
                    rs[i + 1] = rs[i] + sq * dt;
                }
            });
        Self {
            grid,
            paths,
            dim,
            seed,
            increments,
            positions,
            running_abs,
            running_sq,
        }
    }

    /// Copy of this ensemble whose increments at steps `>= from_step` are
    /// redrawn from the substreams of `new_seed`; the prefix is untouched.
    pub fn resample_suffix(&self, from_step: usize, new_seed: u64) -> Result<Self> {
        let steps = self.steps();
        let dim = self.dim;
        if from_step > steps {
            return Err(Error::Argument(format!(
                "suffix start {from_step} beyond last step {steps}"
            )));
        }
        let mut increments = self.increments.clone();
        let normal = Normal::standard();
        let grid = &self.grid;
        increments
            .par_chunks_mut(steps * dim)
            .enumerate()
            .for_each(|(path, chunk)| {
                let mut rng = substream(new_seed, path, from_step, dim);
                for step in from_step..steps {
                    let sd = grid.dt(step).sqrt();
                    for c in 0..dim {
                        chunk[step * dim + c] = sd * normal.inverse_cdf(uniform_open(rng.next_u64()));
                    }
                }
            });
        Self::from_increments(Arc::clone(&self.grid), self.paths, dim, self.seed, increments)
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
    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Increment `B_{t_{i+1}} - B_{t_i}` on `path`.
    #[inline]
    pub fn increment(&self, path: usize, step: usize) -> &[f64] {
        let off = (path * self.steps() + step) * self.dim;
        &self.increments[off..off + self.dim]
    }

    /// `B_{t_i}` on `path`.
    #[inline]
    pub fn position(&self, path: usize, node: usize) -> &[f64] {
        let off = (path * (self.steps() + 1) + node) * self.dim;
        &self.positions[off..off + self.dim]
    }

    #[inline]
    pub fn running_abs_integral(&self, path: usize, node: usize) -> f64 {
        self.running_abs[path * (self.steps() + 1) + node]
    }

    #[inline]
    pub fn running_sq_integral(&self, path: usize, node: usize) -> f64 {
        self.running_sq[path * (self.steps() + 1) + node]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// The Brownian motion itself as a `d`-dimensional adapted process.
    pub fn brownian_process(&self) -> AdaptedProcess {
        AdaptedProcess::from_values(
            Arc::clone(&self.grid),
            self.paths,
            self.dim,
            self.positions.clone(),
        )
        .expect("positions are finite")
    }

    /// Writes the binary dump: seven little-endian 64-bit header fields
    /// (magic, version, N, M, d, seed, T) then the increments as `f64`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        if !self.grid.is_uniform() {
            return Err(Error::Argument(
                "binary dump supports uniform grids only".into(),
            ));
        }
        let header = [
            DUMP_MAGIC,
            DUMP_VERSION,
            self.steps() as u64,
            self.paths as u64,
            self.dim as u64,
            self.seed,
            self.grid.horizon().to_bits(),
        ];
        for h in header {
            w.write_all(&h.to_le_bytes())?;
        }
        for x in &self.increments {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut header = [0u64; 7];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        if header[0] != DUMP_MAGIC {
            return Err(Error::Io("not an ensemble dump (bad magic)".into()));
        }
        if header[1] != DUMP_VERSION {
            return Err(Error::Io(format!("unsupported dump version {}", header[1])));
        }
        let (steps, paths, dim) = (header[2] as usize, header[3] as usize, header[4] as usize);
        let grid = Arc::new(TimeGrid::uniform(f64::from_bits(header[6]), steps)?);
        let n = paths * steps * dim;
        let mut increments = alloc(paths, steps, dim)?;
        for _ in 0..n {
            r.read_exact(&mut word)?;
            increments.push(f64::from_le_bytes(word));
        }
        Self::from_increments(grid, paths, dim, header[5], increments)
    }
}

/// Per-path grid stopping indices of a running-integral barrier crossing.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingIndex {
    /// First node `i` with left-endpoint `∫₀^{t_i} f(B_s) ds >= barrier`, else `N`.
    pub index: Vec<usize>,
    /// `max_dt · max_{j <= τ} f(B_{t_j})`: bound on how far the running
    /// integral at the stopping node can exceed the barrier.
    pub overshoot: Vec<f64>,
}

/// Grid hitting times `τ ∧ T` of `∫₀ᵗ f(B_s) ds >= barrier`.
pub fn hitting_time_integral(
    ensemble: &PathEnsemble,
    integrand: &(dyn Fn(&[f64]) -> f64 + Sync),
    barrier: f64,
) -> Result<StoppingIndex> {
    if !(barrier >= 0.0) {
        return Err(Error::Domain(format!("barrier must be nonnegative, got {barrier}")));
    }
    let steps = ensemble.steps();
    let max_dt = ensemble.grid().max_dt();
    let per_path: Vec<Result<(usize, f64)>> = (0..ensemble.paths())
        .into_par_iter()
        .map(|path| {
            let mut acc = 0.0;
            let mut fmax: f64 = 0.0;
            for i in 0..=steps {
                let f = integrand(ensemble.position(path, i));
                if !(f >= 0.0 && f.is_finite()) {
                    return Err(Error::Domain(format!(
                        "negative or non-finite integrand {f} on path {path} at node {i}"
                    )));
                }
                fmax = fmax.max(f);
                if acc >= barrier || i == steps {
                    return Ok((i, max_dt * fmax));
                }
                acc += f * ensemble.grid().dt(i);
            }
            unreachable!()
        })
        .collect();
    let mut index = Vec::with_capacity(per_path.len());
    let mut overshoot = Vec::with_capacity(per_path.len());
    for r in per_path {
        let (i, o) = r?;
        index.push(i);
        overshoot.push(o);
    }
    Ok(StoppingIndex { index, overshoot })
}

/// Nonnegative scalar coefficient process `f(B_t)·1_{t <= τ}` where `τ` is the
/// grid hitting time of `∫₀ᵗ f(B_s)^exponent ds >= barrier`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientProcess {
    pub process: AdaptedProcess,
    pub barrier: f64,
    pub exponent: u32,
    pub stop: Vec<usize>,
    /// Per-path slack in `∫₀ᵀ value^exponent dt <= barrier + overshoot_bound`.
    pub overshoot_bound: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoefficientAudit {
    pub barrier: f64,
    pub exponent: u32,
    pub paths: usize,
    pub paths_within_bound: usize,
    pub max_integral: f64,
    pub max_overshoot_bound: f64,
    pub min_value: f64,
}

impl CoefficientAudit {
    pub fn passed(&self) -> bool {
        self.paths_within_bound == self.paths && self.min_value >= 0.0
    }
}

impl CoefficientProcess {
    /// A process used as given (no barrier).
    pub fn unbounded(process: AdaptedProcess, exponent: u32) -> Result<Self> {
        if process.dim() != 1 {
            return Err(Error::Argument("coefficient processes are scalar".into()));
        }
        if process.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Domain("coefficient process must be nonnegative".into()));
        }
        let m = process.paths();
        let n = process.grid().steps();
        Ok(Self {
            process,
            barrier: f64::INFINITY,
            exponent,
            stop: vec![n; m],
            overshoot_bound: vec![0.0; m],
        })
    }

    pub fn constant(grid: Arc<TimeGrid>, paths: usize, value: f64, exponent: u32) -> Result<Self> {
        Self::unbounded(AdaptedProcess::constant(grid, paths, &[value]), exponent)
    }

    #[inline]
    pub fn value(&self, path: usize, node: usize) -> f64 {
        self.process.scalar(path, node)
    }

    pub fn paths(&self) -> usize {
        self.process.paths()
    }

    /// Pathwise `∫ value^exponent dt` against `barrier + overshoot_bound`.
    pub fn audit(&self) -> CoefficientAudit {
        let integrals = pathwise_integral(&self.process, self.exponent as f64)
            .expect("coefficient processes are scalar");
        let within = integrals
            .per_path
            .iter()
            .zip(&self.overshoot_bound)
            .filter(|(v, o)| **v <= self.barrier + **o)
            .count();
        CoefficientAudit {
            barrier: self.barrier,
            exponent: self.exponent,
            paths: self.paths(),
            paths_within_bound: within,
            max_integral: integrals.max,
            max_overshoot_bound: self.overshoot_bound.iter().cloned().fold(0.0, f64::max),
            min_value: self.process.values().iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    /// Same values with every entry multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let f = factor.powi(self.exponent as i32);
        Self {
            process: self.process.scaled(factor),
            barrier: self.barrier * f,
            exponent: self.exponent,
            stop: self.stop.clone(),
            overshoot_bound: self.overshoot_bound.iter().map(|o| o * f).collect(),
        }
    }
}

/// `value_t = f(B_t)·1_{t <= τ}`, `τ` the hitting time of `∫ f^exponent >= barrier`.
pub fn truncated_coefficient(
    ensemble: &PathEnsemble,
    integrand: &(dyn Fn(&[f64]) -> f64 + Sync),
    barrier: f64,
    exponent: u32,
) -> Result<CoefficientProcess> {
    if !(exponent == 1 || exponent == 2) {
        return Err(Error::Argument(format!("exponent must be 1 or 2, got {exponent}")));
    }
    let powered = |b: &[f64]| integrand(b).powi(exponent as i32);
    let stop = if barrier.is_infinite() {
        StoppingIndex {
            index: vec![ensemble.steps(); ensemble.paths()],
            overshoot: vec![0.0; ensemble.paths()],
        }
    } else {
        hitting_time_integral(ensemble, &powered, barrier)?
    };
    let grid = Arc::clone(ensemble.grid_arc());
    let values: Vec<f64> = (0..ensemble.paths())
        .into_par_iter()
        .flat_map_iter(|path| {
            let tau = stop.index[path];
            (0..=ensemble.steps()).map(move |i| {
                if i <= tau {
                    integrand(ensemble.position(path, i))
                } else {
                    0.0
                }
            })
        })
        .collect();
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("integrand produced {v}")));
    }
    let process = AdaptedProcess::from_values(grid, ensemble.paths(), 1, values)?;
    // the stopping node itself contributes one more step beyond the crossing
    let overshoot_bound = stop.overshoot.iter().map(|o| 2.0 * o).collect();
    Ok(CoefficientProcess {
        process,
        barrier,
        exponent,
        stop: stop.index,
        overshoot_bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseIntegral {
    pub per_path: Vec<f64>,
    /// Empirical essential supremum (maximum over paths).
    pub max: f64,
}

/// Left-endpoint `∫₀ᵀ |value|^power dt` on each path.
pub fn pathwise_integral(process: &AdaptedProcess, power: f64) -> Result<PathwiseIntegral> {
    if process.dim() != 1 {
        return Err(Error::Argument("pathwise_integral needs a scalar process".into()));
    }
    let grid = process.grid();
    let per_path: Vec<f64> = (0..process.paths())
        .map(|path| {
            (0..grid.steps())
                .map(|i| process.scalar(path, i).abs().powf(power) * grid.dt(i))
                .sum()
        })
        .collect();
    let max = per_path.iter().cloned().fold(0.0, f64::max);
    Ok(PathwiseIntegral { per_path, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(b: &[f64]) -> f64 {
        b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn linear_path(n: usize) -> PathEnsemble {
        let grid = Arc::new(TimeGrid::uniform(2.0, n).unwrap());
        let pos: Vec<f64> = grid.nodes().to_vec();
        PathEnsemble::from_positions(grid, 1, 1, pos).unwrap()
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let g = Arc::new(TimeGrid::uniform(1.0, 8).unwrap());
        let a = PathEnsemble::simulate(Arc::clone(&g), 50, 2, 11).unwrap();
        let b = PathEnsemble::simulate(Arc::clone(&g), 50, 2, 11).unwrap();
        assert_eq!(a, b);
        let c = PathEnsemble::simulate(g, 80, 2, 11).unwrap();
        assert_eq!(a.increments(), &c.increments()[..a.increments().len()]);
    }

    #[test]
    fn hitting_time_on_linear_path() {
        let ens = linear_path(200);
        let s = hitting_time_integral(&ens, &|b| norm(b), 0.5).unwrap();
        let t = ens.grid().time(s.index[0]);
        let dt = ens.grid().dt(0);
        assert!(t >= 1.0 - 1e-12 && t <= 1.0 + dt + 1e-12, "t = {t}");
    }

    #[test]
    fn degenerate_and_unreachable_barriers() {
        let g = Arc::new(TimeGrid::uniform(1.0, 20).unwrap());
        let ens = PathEnsemble::simulate(g, 100, 1, 3).unwrap();
        let s = hitting_time_integral(&ens, &|b| norm(b), 1e9).unwrap();
        assert!(s.index.iter().all(|&i| i == 20));
        let s = hitting_time_integral(&ens, &|b| norm(b), 0.0).unwrap();
        assert!(s.index.iter().all(|&i| i == 0));
        assert!(hitting_time_integral(&ens, &|_| -1.0, 1.0).is_err());
        assert!(hitting_time_integral(&ens, &|b| norm(b), -1.0).is_err());
    }

    #[test]
    fn truncated_coefficient_closed_form() {
        let ens = linear_path(200);
        let c = truncated_coefficient(&ens, &|b| norm(b), 0.5, 1).unwrap();
        let tau = ens.grid().time(c.stop[0]);
        for i in 0..=200 {
            let t = ens.grid().time(i);
            let v = c.value(0, i);
            if t <= tau {
                assert!((v - t).abs() < 1e-12);
            } else {
                assert_eq!(v, 0.0);
            }
        }
        assert!(c.audit().passed());
    }

    #[test]
    fn zero_barrier_kills_process_after_start() {
        let g = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
        let ens = PathEnsemble::simulate(g, 20, 1, 5).unwrap();
        let c = truncated_coefficient(&ens, &|b| norm(b), 0.0, 1).unwrap();
        for p in 0..20 {
            for i in 1..=10 {
                assert_eq!(c.value(p, i), 0.0);
            }
        }
        assert!(truncated_coefficient(&ens, &|b| norm(b), 1.0, 3).is_err());
    }

    #[test]
    fn infinite_barrier_is_raw_integrand() {
        let g = Arc::new(TimeGrid::uniform(1.0, 10).unwrap());
        let ens = PathEnsemble::simulate(g, 20, 2, 5).unwrap();
        let c = truncated_coefficient(&ens, &|b| norm(b), f64::INFINITY, 2).unwrap();
        for p in 0..20 {
            for i in 0..=10 {
                assert_eq!(c.value(p, i), norm(ens.position(p, i)));
            }
        }
    }

    #[test]
    fn pathwise_integral_of_constants() {
        let g = Arc::new(TimeGrid::uniform(3.0, 12).unwrap());
        let p = AdaptedProcess::constant(Arc::clone(&g), 4, &[2.0]);
        let r = pathwise_integral(&p, 1.5).unwrap();
        for v in &r.per_path {
            assert!((v - 2f64.powf(1.5) * 3.0).abs() < 1e-12);
        }
        let z = AdaptedProcess::zeros(g, 4, 1);
        assert_eq!(pathwise_integral(&z, 2.0).unwrap().max, 0.0);
    }

    #[test]
    fn dump_roundtrip() {
        let g = Arc::new(TimeGrid::uniform(1.5, 6).unwrap());
        let ens = PathEnsemble::simulate(g, 7, 2, 99).unwrap();
        let mut buf = Vec::new();
        ens.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 7 * 8 + 7 * 6 * 2 * 8);
        assert_eq!(&buf[..8], b"BSDEPATH");
        let back = PathEnsemble::read_dump(&buf[..]).unwrap();
        assert_eq!(back, ens);
        buf[0] = b'X';
        assert!(PathEnsemble::read_dump(&buf[..]).is_err());
    }
}
