use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Draws `(path, step, y₁, y₂, z₁, z₂)` tuples. Tuple `j` comes from its own
/// ChaCha stream, so any tuple can be regenerated from `(seed, j)` alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::radius")]
    pub y_radius: f64,
    #[serde(default = "defaults::radius")]
    pub z_radius: f64,
    /// Gaps `|y₁ − y₂|` (and `|z₁ − z₂|`) used by corner tuples.
    #[serde(default = "defaults::corner_gaps")]
    pub corner_gaps: Vec<f64>,
    /// One tuple in `corner_period` is a corner tuple.
    #[serde(default = "defaults::corner_period")]
    pub corner_period: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "defaults::rel_tol")]
    pub rel_tol: f64,
}

mod defaults {
    pub fn samples() -> usize {
        100_000
    }
    pub fn radius() -> f64 {
        10.0
    }
    pub fn corner_gaps() -> Vec<f64> {
        vec![1e-6, 1e-3]
    }
    pub fn corner_period() -> usize {
        4
    }
    pub fn abs_tol() -> f64 {
        1e-6
    }
    pub fn rel_tol() -> f64 {
        1e-4
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: defaults::samples(),
            y_radius: defaults::radius(),
            z_radius: defaults::radius(),
            corner_gaps: defaults::corner_gaps(),
            corner_period: defaults::corner_period(),
            seed: 0,
            abs_tol: defaults::abs_tol(),
            rel_tol: defaults::rel_tol(),
        }
    }
}

impl SamplerConfig {
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.corner_period == 0 {
            return Err(Error::Argument("sampler needs samples >= 1 and corner_period >= 1".into()));
        }
        if !(self.y_radius > 0.0 && self.z_radius > 0.0) {
            return Err(Error::Argument("sampler radii must be positive".into()));
        }
        if self.corner_gaps.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Argument("corner gaps must be positive".into()));
        }
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) {
            return Err(Error::Argument("tolerances must be nonnegative".into()));
        }
        Ok(())
    }

    /// Violation threshold for a comparison `lhs <= rhs`.
    #[inline]
    pub fn tolerance(&self, lhs: f64, rhs: f64) -> f64 {
        self.abs_tol + self.rel_tol * lhs.abs().max(rhs.abs())
    }

    /// Whether tuple `index` is a corner tuple, and its gap.
    pub fn corner_gap(&self, index: usize) -> Option<f64> {
        if self.corner_gaps.is_empty() || !index.is_multiple_of(self.corner_period) {
            return None;
        }
        let slot = index / self.corner_period;
        Some(self.corner_gaps[slot % self.corner_gaps.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuple {
    pub index: usize,
    pub path: usize,
    pub step: usize,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, normal: &Normal) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    normal.inverse_cdf(u)
}

fn unit_vector(rng: &mut ChaCha8Rng, normal: &Normal, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(rng, normal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, normal: &Normal, dim: usize, radius: f64) -> Vec<f64> {
    let dir = unit_vector(rng, normal, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x * r).collect()
}

/// Regenerates tuple `index` for an ensemble of `paths` paths and `steps`
/// steps with `y ∈ R^k`, `z ∈ R^{kd}`.
pub fn draw_tuple(cfg: &SamplerConfig, index: usize, paths: usize, steps: usize, k: usize, kd: usize) -> Tuple {
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let path = rng.random_range(0..paths);
    let step = rng.random_range(0..steps);
    let y1 = in_ball(&mut rng, &normal, k, cfg.y_radius);
    let z1 = in_ball(&mut rng, &normal, kd, cfg.z_radius);
    let (y2, z2) = match cfg.corner_gap(index) {
        Some(gap) => {
            let dy = unit_vector(&mut rng, &normal, k);
            let dz = unit_vector(&mut rng, &normal, kd);
            (
                y1.iter().zip(&dy).map(|(a, b)| a + gap * b).collect(),
                z1.iter().zip(&dz).map(|(a, b)| a + gap * b).collect(),
            )
        }
        None => (in_ball(&mut rng, &normal, k, cfg.y_radius), in_ball(&mut rng, &normal, kd, cfg.z_radius)),
    };
    Tuple {
        index,
        path,
        step,
        y1,
        y2,
        z1,
        z2,
    }
}
