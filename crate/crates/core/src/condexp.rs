//! Least-squares Monte Carlo estimates of `E[· | F_{t_i}]`.
//!
//! Features are standardized before the normal equations are assembled; the
//! assembly runs over fixed-size path chunks combined in chunk order, so the
//! fitted coefficients do not depend on the number of worker threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::stats::sorted_sum;
use crate::paths::PathEnsemble;

pub const DEFAULT_RIDGE_SCALE: f64 = 1e-8;
const CHUNK: usize = 512;
const CHOLESKY_CONDITION_LIMIT: f64 = 1e12;

/// Polynomial features in `B_{t_i}` and optional running path functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    /// Highest power of each Brownian component.
    pub degree: usize,
    /// Append `∫₀ᵗ|B|ds` and `∫₀ᵗ|B|²ds` as features.
    pub running_functionals: bool,
    /// `λ = ridge_scale · trace(G)/p` on the standardized Gram matrix `G`;
    /// the intercept is not penalized.
    pub ridge_scale: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self {
            degree: 3,
            running_functionals: false,
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

impl RegressionBasis {
    pub fn with_running_functionals(mut self, on: bool) -> Self {
        self.running_functionals = on;
        self
    }

    pub fn with_ridge_scale(mut self, scale: f64) -> Self {
        self.ridge_scale = scale;
        self
    }

    pub fn feature_count(&self, dim: usize) -> usize {
        1 + self.degree * dim + if self.running_functionals { 2 } else { 0 }
    }

    /// Feature rows at node `step`; they only read the path up to that node.
    pub fn features(&self, ensemble: &PathEnsemble, step: usize) -> FeatureMatrix {
        let d = ensemble.dim();
        let cols = self.feature_count(d);
        let mut data = vec![0.0; ensemble.paths() * cols];
        data.par_chunks_mut(cols).enumerate().for_each(|(path, row)| {
            row[0] = 1.0;
            let b = ensemble.position(path, step);
            let mut k = 1;
            for &x in b {
                let mut pw = 1.0;
                for _ in 0..self.degree {
                    pw *= x;
                    row[k] = pw;
                    k += 1;
                }
            }
            if self.running_functionals {
                row[k] = ensemble.running_abs_integral(path, step);
                row[k + 1] = ensemble.running_sq_integral(path, step);
            }
        });
        FeatureMatrix {
            rows: ensemble.paths(),
            cols,
            data,
        }
    }
}

/// Row-major `paths × features` design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 || data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "feature buffer of length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite feature".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds the matrix from per-path feature columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Argument("feature columns differ in length".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in columns {
                data.push(c[r]);
            }
        }
        Self::from_rows(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Cholesky,
    Svd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Root mean square residual per target.
    pub residual_rms: Vec<f64>,
    /// Eigenvalue ratio of the standardized Gram matrix (before ridge).
    pub condition: f64,
    pub features_used: usize,
    pub ridge: f64,
    pub method: FitMethod,
}

/// How a raw feature column enters the standardized design.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Intercept { raw: usize, value: f64 },
    Scaled { raw: usize, shift: f64, scale: f64 },
}

/// Fitted regression for one time step and one or more targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CondExpEstimator {
    columns: Vec<Column>,
    /// `p × r` coefficients in standardized coordinates.
    coefficients: DMatrix<f64>,
    targets: usize,
    fitted: Vec<f64>,
    samples: usize,
    pub diagnostics: FitDiagnostics,
}

impl CondExpEstimator {
    pub fn targets(&self) -> usize {
        self.targets
    }

    /// In-sample predictions, `(path, target)` row-major.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn fitted_target(&self, target: usize) -> Vec<f64> {
        self.fitted.iter().skip(target).step_by(self.targets).copied().collect()
    }

    pub fn into_fitted(self) -> Vec<f64> {
        self.fitted
    }

    /// Prediction for a single raw feature row.
    pub fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, col) in self.columns.iter().enumerate() {
            let x = standardized(col, row);
            for (t, o) in out.iter_mut().enumerate() {
                *o += x * self.coefficients[(j, t)];
            }
        }
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Vec<f64> {
        let mut out = vec![0.0; features.rows() * self.targets];
        out.par_chunks_mut(self.targets)
            .enumerate()
            .for_each(|(r, o)| self.predict_row(features.row(r), o));
        out
    }

    /// Fitted coefficients mapped back to the raw feature columns; entry `j`
    /// multiplies raw feature `j` (constant columns fold into the intercept).
    pub fn raw_coefficients(&self, raw_cols: usize, target: usize) -> Vec<f64> {
        let mut out = vec![0.0; raw_cols];
        let mut intercept_raw = None;
        let mut offset = 0.0;
        for (j, col) in self.columns.iter().enumerate() {
            let c = self.coefficients[(j, target)];
            match *col {
                Column::Intercept { raw, value } => {
                    intercept_raw = Some((raw, value));
                    offset += c;
                }
                Column::Scaled { raw, shift, scale } => {
                    out[raw] += c / scale;
                    offset -= c * shift / scale;
                }
            }
        }
        if let Some((raw, value)) = intercept_raw {
            out[raw] += offset / value;
        }
        out
    }

    /// Standard error of an in-sample prediction: `rms · sqrt(p / M)`.
    pub fn prediction_error(&self, target: usize) -> f64 {
        let p = self.diagnostics.features_used as f64;
        self.diagnostics.residual_rms[target] * (p / self.samples as f64).sqrt()
    }
}

#[inline]
fn standardized(col: &Column, row: &[f64]) -> f64 {
    match *col {
        Column::Intercept { raw, value } => row[raw] / value,
        Column::Scaled { raw, shift, scale } => (row[raw] - shift) / scale,
    }
}

fn column_layout(features: &FeatureMatrix) -> Vec<Column> {
    let m = features.rows();
    let mut stats = Vec::with_capacity(features.cols());
    for c in 0..features.cols() {
        let col: Vec<f64> = (0..m).map(|r| features.row(r)[c]).collect();
        let mean = sorted_sum(&col) / m as f64;
        let dev: Vec<f64> = col.iter().map(|x| (x - mean) * (x - mean)).collect();
        let sd = (sorted_sum(&dev) / m as f64).sqrt();
        let constant = sd <= 1e-12 * (1.0 + mean.abs()) || col.iter().all(|x| *x == col[0]);
        stats.push((mean, sd, constant));
    }
    let intercept = stats
        .iter()
        .position(|&(mean, _, constant)| constant && mean != 0.0);
    let mut columns = Vec::new();
    if let Some(raw) = intercept {
        columns.push(Column::Intercept {
            raw,
            value: stats[raw].0,
        });
    }
    for (raw, &(mean, sd, constant)) in stats.iter().enumerate() {
        if constant {
            continue;
        }
        columns.push(Column::Scaled {
            raw,
            shift: if intercept.is_some() { mean } else { 0.0 },
            scale: if intercept.is_some() {
                sd
            } else {
                (sd * sd + mean * mean).sqrt()
            },
        });
    }
    columns
}

/// Ridge least squares of `targets` (`paths × n_targets`, row-major) on the
/// feature rows. Constant columns collapse into one intercept, other columns
/// are standardized.
pub fn fit_conditional_expectation(
    targets: &[f64],
    n_targets: usize,
    features: &FeatureMatrix,
    ridge_scale: f64,
) -> Result<CondExpEstimator> {
    let m = features.rows();
    if n_targets == 0 || targets.len() != m * n_targets {
        return Err(Error::Argument(format!(
            "targets of length {} do not align with {m} paths x {n_targets}",
            targets.len()
        )));
    }
    if targets.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite regression target".into()));
    }
    if !(ridge_scale >= 0.0) {
        return Err(Error::Argument("ridge scale must be nonnegative".into()));
    }
    let columns = column_layout(features);
    let p = columns.len();
    if p == 0 {
        // every feature is identically zero: the only estimate is zero
        return Ok(CondExpEstimator {
            columns,
            coefficients: DMatrix::zeros(0, n_targets),
            targets: n_targets,
            fitted: vec![0.0; m * n_targets],
            samples: m,
            diagnostics: FitDiagnostics {
                residual_rms: rms_per_target(targets, &vec![0.0; m * n_targets], n_targets),
                condition: 1.0,
                features_used: 0,
                ridge: 0.0,
                method: FitMethod::Cholesky,
            },
        });
    }
    if m < p {
        return Err(Error::Argument(format!(
            "{m} paths cannot identify {p} regression features"
        )));
    }
    let width = p * p + p * n_targets;
    let partial: Vec<Vec<f64>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = vec![0.0; width];
            let mut x = vec![0.0; p];
            for r in chunk * CHUNK..((chunk + 1) * CHUNK).min(m) {
                let row = features.row(r);
                for (j, col) in columns.iter().enumerate() {
                    x[j] = standardized(col, row);
                }
                for a in 0..p {
                    for b in a..p {
                        acc[a * p + b] += x[a] * x[b];
                    }
                    for t in 0..n_targets {
                        acc[p * p + a * n_targets + t] += x[a] * targets[r * n_targets + t];
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for part in &partial {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    let mut gram = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = total[a * p + b] / m as f64;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    let rhs = DMatrix::from_fn(p, n_targets, |a, t| total[p * p + a * n_targets + t] / m as f64);

    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max_ev = eig.iter().cloned().fold(0.0, f64::max);
    let min_ev = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    let ridge = ridge_scale * gram.trace() / p as f64;
    if ridge == 0.0 && !(min_ev > 1e-14 * max_ev) {
        return Err(Error::SingularFit { step: None });
    }
    let mut regularized = gram;
    for (a, col) in columns.iter().enumerate() {
        if matches!(col, Column::Scaled { .. }) {
            regularized[(a, a)] += ridge;
        }
    }
    let reg_condition = if min_ev + ridge > 0.0 {
        (max_ev + ridge) / (min_ev + ridge)
    } else {
        f64::INFINITY
    };
    let (coefficients, method) = match (reg_condition <= CHOLESKY_CONDITION_LIMIT)
        .then(|| regularized.clone().cholesky())
        .flatten()
    {
        Some(ch) => (ch.solve(&rhs), FitMethod::Cholesky),
        None => {
            let svd = regularized.svd(true, true);
            let sol = svd
                .solve(&rhs, 1e-14 * max_ev.max(f64::MIN_POSITIVE))
                .map_err(|_| Error::SingularFit { step: None })?;
            (sol, FitMethod::Svd)
        }
    };
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularFit { step: None });
    }
    let mut est = CondExpEstimator {
        columns,
        coefficients,
        targets: n_targets,
        fitted: Vec::new(),
        samples: m,
        diagnostics: FitDiagnostics {
            residual_rms: Vec::new(),
            condition,
            features_used: p,
            ridge,
            method,
        },
    };
    est.fitted = est.predict(features);
    est.diagnostics.residual_rms = rms_per_target(targets, &est.fitted, n_targets);
    Ok(est)
}

fn rms_per_target(targets: &[f64], fitted: &[f64], n_targets: usize) -> Vec<f64> {
    let m = targets.len() / n_targets;
    (0..n_targets)
        .map(|t| {
            let sq: Vec<f64> = (0..m)
                .map(|r| {
                    let e = targets[r * n_targets + t] - fitted[r * n_targets + t];
                    e * e
                })
                .collect();
            (sorted_sum(&sq) / m.max(1) as f64).sqrt()
        })
        .collect()
}

/// Estimate of `z_i` from `E[y_{i+1} ΔB_i | F_{t_i}] / Δt`. The target is
/// centered on the fitted `E[y_{i+1} | F_{t_i}]` first, which leaves the
/// conditional covariance unchanged and removes most of the target variance.
/// Returns per-path `k × d` matrices flattened row-major and the estimator of
/// the centered products.
pub fn martingale_projection(
    next_values: &[f64],
    k: usize,
    increments: &[f64],
    d: usize,
    dt: f64,
    features: &FeatureMatrix,
    ridge_scale: f64,
) -> Result<(Vec<f64>, CondExpEstimator)> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("time step must be positive, got {dt}")));
    }
    let m = features.rows();
    if next_values.len() != m * k || increments.len() != m * d {
        return Err(Error::Argument(
            "next values and increments must align with the feature rows".into(),
        ));
    }
    let mean = fit_conditional_expectation(next_values, k, features, ridge_scale)?;
    let targets = covariance_targets(next_values, mean.fitted(), k, increments, d, dt);
    let est = fit_conditional_expectation(&targets, k * d, features, ridge_scale)?;
    Ok((est.fitted.clone(), est))
}

/// `(y − E) ⊗ ΔB / Δt` per path.
pub(crate) fn covariance_targets(
    next_values: &[f64],
    expectation: &[f64],
    k: usize,
    increments: &[f64],
    d: usize,
    dt: f64,
) -> Vec<f64> {
    let m = increments.len() / d;
    let mut targets = vec![0.0; m * k * d];
    targets.par_chunks_mut(k * d).enumerate().for_each(|(r, t)| {
        for a in 0..k {
            let centered = next_values[r * k + a] - expectation[r * k + a];
            for b in 0..d {
                t[a * d + b] = centered * increments[r * d + b] / dt;
            }
        }
    });
    targets
}
