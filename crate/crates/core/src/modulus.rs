//! Candidate moduli `ρ` for one-sided Osgood conditions, the Bihari transform
//! `Θ(x) = ∫₁ˣ du/ρ(u)` and its inverse, and sample-based Osgood diagnostics.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{brent, integrate, QuadratureOptions};

type ModulusFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A function `ρ: R₊ → R₊` offered as a member of the Osgood class.
#[derive(Clone)]
pub struct ModulusFunction {
    label: String,
    eval: Arc<ModulusFn>,
}

impl fmt::Debug for ModulusFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModulusFunction")
            .field("label", &self.label)
            .finish()
    }
}

impl ModulusFunction {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            eval: Arc::new(f),
        }
    }

    pub fn identity() -> Self {
        Self::new("u", |u| u)
    }

    /// `u ↦ c·u^e`.
    pub fn power(coefficient: f64, exponent: f64) -> Self {
        Self::new(format!("{coefficient}*u^{exponent}"), move |u: f64| {
            coefficient * u.powf(exponent)
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// `κ(x) = x^{(p-1)/p} ρ(x^{1/p})`, the modulus for the p-order monotonicity
    /// condition implied by a one-sided Osgood condition with `ρ`.
    pub fn monotonicity_modulus(&self, p: f64) -> ModulusFunction {
        let rho = self.clone();
        ModulusFunction::new(format!("kappa_p{p}[{}]", self.label), move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                x.powf((p - 1.0) / p) * rho.eval(x.powf(1.0 / p))
            }
        })
    }

    /// `ϱ(x) = ρ(x^{1/p})^p`, so that `ϱ^{1/p}(|Δy|^p) = ρ(|Δy|)`.
    pub fn mao_modulus(&self, p: f64) -> ModulusFunction {
        let rho = self.clone();
        ModulusFunction::new(format!("varrho_p{p}[{}]", self.label), move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                rho.eval(x.powf(1.0 / p)).powf(p)
            }
        })
    }

    /// Inverse of [`mao_modulus`](Self::mao_modulus): `ρ(x) = ϱ(x^p)^{1/p}`.
    pub fn from_mao_modulus(varrho: &ModulusFunction, p: f64) -> ModulusFunction {
        let v = varrho.clone();
        ModulusFunction::new(format!("rho_from_p{p}[{}]", varrho.label), move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                v.eval(x.powf(p)).powf(1.0 / p)
            }
        })
    }

    pub fn scaled(&self, factor: f64) -> ModulusFunction {
        let rho = self.clone();
        ModulusFunction::new(format!("{factor}*[{}]", self.label), move |x| {
            factor * rho.eval(x)
        })
    }
}

/// Geometric sampling grid used by the shape checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub lower: f64,
    pub upper: f64,
    pub points_per_decade: usize,
    /// Relative slack for the monotonicity and midpoint-concavity tests.
    pub rel_tol: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            lower: 1e-10,
            upper: 1e4,
            points_per_decade: 256,
            rel_tol: 1e-12,
        }
    }
}

impl SamplingConfig {
    pub fn points(&self) -> Vec<f64> {
        let decades = (self.upper / self.lower).log10();
        let n = (decades * self.points_per_decade as f64).ceil() as usize;
        let ratio = (self.upper / self.lower).powf(1.0 / n as f64);
        let mut pts: Vec<f64> = (0..=n).map(|i| self.lower * ratio.powi(i as i32)).collect();
        pts[n] = self.upper;
        pts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulusDiagnostics {
    pub label: String,
    pub samples: usize,
    /// Smallest `A` with `ρ(x) <= A(x+1)` over the samples.
    pub linear_bound: f64,
    /// Largest finite-difference slope on `[c, c̄]` = `[1e-3, 1e3]`.
    pub max_slope_on_compact: f64,
}

/// Checks the sampled shape requirements of the Osgood class: `ρ(0) = 0`,
/// positivity, monotonicity, midpoint concavity and bounded slopes away from 0.
pub fn validate(rho: &ModulusFunction, cfg: &SamplingConfig) -> Result<ModulusDiagnostics> {
    let bad = |reason: String| Error::InvalidModulus {
        label: rho.label.clone(),
        reason,
    };
    let r0 = rho.eval(0.0);
    if r0 != 0.0 {
        return Err(bad(format!("rho(0) = {r0}, expected 0")));
    }
    let xs = cfg.points();
    let vals: Vec<f64> = xs.iter().map(|&x| rho.eval(x)).collect();
    for (&x, &v) in xs.iter().zip(&vals) {
        if !(v.is_finite() && v > 0.0) {
            return Err(bad(format!("rho({x}) = {v} is not positive")));
        }
    }
    for i in 1..xs.len() {
        if vals[i] < vals[i - 1] * (1.0 - cfg.rel_tol) {
            return Err(bad(format!(
                "decreasing between {} and {}",
                xs[i - 1],
                xs[i]
            )));
        }
    }
    for i in 0..xs.len().saturating_sub(1) {
        let (a, b) = (xs[i], xs[i + 1]);
        let mid = rho.eval(0.5 * (a + b));
        let chord = 0.5 * (vals[i] + vals[i + 1]);
        if mid < chord - cfg.rel_tol * chord {
            return Err(bad(format!("midpoint concavity fails on [{a}, {b}]")));
        }
    }
    let linear_bound = linear_bound_constant(rho, &xs)?;
    let mut max_slope: f64 = 0.0;
    for i in 1..xs.len() {
        if xs[i - 1] >= 1e-3 && xs[i] <= 1e3 {
            max_slope = max_slope.max((vals[i] - vals[i - 1]) / (xs[i] - xs[i - 1]));
        }
    }
    if !max_slope.is_finite() {
        return Err(bad("unbounded slope on [1e-3, 1e3]".into()));
    }
    Ok(ModulusDiagnostics {
        label: rho.label.clone(),
        samples: xs.len(),
        linear_bound,
        max_slope_on_compact: max_slope,
    })
}

/// Smallest `A` with `ρ(x) <= A (x + 1)` over `grid`.
pub fn linear_bound_constant(rho: &ModulusFunction, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Argument("empty sample grid".into()));
    }
    let mut a: f64 = 0.0;
    for &x in grid {
        if !(x >= 0.0) {
            return Err(Error::Argument(format!("negative sample point {x}")));
        }
        let v = rho.eval(x);
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidModulus {
                label: rho.label.clone(),
                reason: format!("rho({x}) = {v}"),
            });
        }
        a = a.max(v / (x + 1.0));
    }
    Ok(a)
}

fn theta_options() -> QuadratureOptions {
    QuadratureOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-13,
        max_intervals: 4000,
    }
}

/// `∫₀ˢ e^σ / ρ(e^σ) dσ`, i.e. `Θ(e^s)` in logarithmic coordinates.
fn theta_log(rho: &ModulusFunction, s: f64) -> Result<f64> {
    let degenerate = Cell::new(None::<f64>);
    let w = |sigma: f64| {
        let u = sigma.exp();
        let r = rho.eval(u);
        if !(r > 0.0) || !r.is_finite() {
            degenerate.set(Some(u));
            return 0.0;
        }
        u / r
    };
    let res = integrate(w, 0.0, s, theta_options());
    if let Some(u) = degenerate.get() {
        return Err(Error::InvalidModulus {
            label: rho.label.clone(),
            reason: format!("rho({u}) is zero or non-finite"),
        });
    }
    Ok(res?.value)
}

/// `Θ(x) = ∫₁ˣ du/ρ(u)` for `x > 0`.
pub fn theta(rho: &ModulusFunction, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("theta needs x > 0, got {x}")));
    }
    theta_log(rho, x.ln())
}

const LOG_RANGE: f64 = 700.0;

/// Inverse of [`theta`], by bracketing root search in `ln x`.
pub fn theta_inv(rho: &ModulusFunction, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::Domain(format!("theta_inv needs a finite target, got {y}")));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let f = |s: f64| theta_log(rho, s).map(|v| v - y);
    let (mut lo, mut hi) = if y > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    if y > 0.0 {
        while f(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > LOG_RANGE {
                return Err(Error::Range {
                    target: y,
                    lower: f64::NEG_INFINITY,
                    upper: theta_log(rho, LOG_RANGE)?,
                });
            }
        }
    } else {
        while f(lo)? > 0.0 {
            hi = lo;
            lo *= 2.0;
            if lo < -LOG_RANGE {
                return Err(Error::Range {
                    target: y,
                    lower: theta_log(rho, -LOG_RANGE)?,
                    upper: f64::INFINITY,
                });
            }
        }
    }
    let s = brent(f, lo, hi, 1e-15, 300)?;
    Ok(s.exp())
}

/// Raw ladder data and the heuristic divergence verdict for `∫_{0⁺}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub label: String,
    pub integrand: String,
    /// `(ε, I(ε))` pairs with `I(ε) = ∫_ε¹`, ε decreasing.
    pub ladder: Vec<(f64, f64)>,
    pub eps_min: f64,
    /// `I(eps_min) - I(√eps_min)`.
    pub tail_increment: f64,
    pub margin: f64,
    pub monotone: bool,
    pub diverges: bool,
    pub heuristic: String,
}

/// Default smallest ladder point. Log-log divergent integrands gain `ln 2`
/// per squaring of ε, so the ladder must reach deep.
pub const DEFAULT_EPS_MIN: f64 = 1e-300;
pub const DEFAULT_DIVERGENCE_MARGIN: f64 = 0.5;

fn ladder_check(
    rho: &ModulusFunction,
    integrand_label: &str,
    eps_min: f64,
    margin: f64,
    weight: impl Fn(f64) -> f64,
) -> Result<DivergenceReport> {
    if !(eps_min > 0.0 && eps_min < 1.0) {
        return Err(Error::Argument(format!("eps_min must lie in (0, 1), got {eps_min}")));
    }
    let total = -eps_min.ln();
    let mut cuts: Vec<f64> = (1..)
        .map(|j| j as f64 * std::f64::consts::LN_10)
        .take_while(|&l| l < total)
        .collect();
    cuts.push(0.5 * total);
    cuts.push(total);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let degenerate = Cell::new(None::<f64>);
    // s = -ln u, du = u ds; weight receives u/ρ(u)
    let w = |s: f64| {
        let u = (-s).exp();
        let r = rho.eval(u);
        if !(r > 0.0) || !r.is_finite() {
            degenerate.set(Some(u));
            return 0.0;
        }
        weight(u / r)
    };
    let opts = QuadratureOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_intervals: 2000,
    };
    let mut ladder = Vec::with_capacity(cuts.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut half_value = f64::NAN;
    for &c in &cuts {
        let piece = integrate(w, prev, c, opts);
        if let Some(u) = degenerate.get() {
            return Err(Error::InvalidModulus {
                label: rho.label.clone(),
                reason: format!("rho({u}) is zero at a positive sample"),
            });
        }
        acc += piece?.value;
        prev = c;
        if c == 0.5 * total {
            half_value = acc;
        }
        ladder.push(((-c).exp(), acc));
    }
    let monotone = ladder.windows(2).all(|p| p[1].1 >= p[0].1);
    let tail_increment = acc - half_value;
    Ok(DivergenceReport {
        label: rho.label.clone(),
        integrand: integrand_label.to_string(),
        ladder,
        eps_min,
        tail_increment,
        margin,
        monotone,
        diverges: monotone && tail_increment >= margin,
        heuristic: format!(
            "diverges iff I(eps_min) - I(sqrt(eps_min)) >= {margin} with monotone ladder; sampled, not a proof"
        ),
    })
}

/// Heuristic test of `∫_{0⁺} du/ρ(u) = +∞`.
pub fn osgood_divergence_check(rho: &ModulusFunction, eps_min: f64) -> Result<DivergenceReport> {
    osgood_divergence_check_with_margin(rho, eps_min, DEFAULT_DIVERGENCE_MARGIN)
}

pub fn osgood_divergence_check_with_margin(
    rho: &ModulusFunction,
    eps_min: f64,
    margin: f64,
) -> Result<DivergenceReport> {
    ladder_check(rho, "1/rho(u)", eps_min, margin, |ratio| ratio)
}

/// Heuristic test of `∫_{0⁺} u^{p̄-1}/ρ^{p̄}(u) du = +∞`.
pub fn condition_3_2_check(
    rho: &ModulusFunction,
    p_bar: f64,
    eps_min: f64,
) -> Result<DivergenceReport> {
    if !(p_bar > 1.0) {
        return Err(Error::Argument(format!("p_bar must exceed 1, got {p_bar}")));
    }
    ladder_check(
        rho,
        &format!("u^{}/rho(u)^{p_bar}", p_bar - 1.0),
        eps_min,
        DEFAULT_DIVERGENCE_MARGIN,
        move |ratio| ratio.powf(p_bar),
    )
}
