use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::modulus::{linear_bound_constant, validate, ModulusFunction, SamplingConfig};
use crate::numeric::stats::Estimate;
use crate::paths::{pathwise_integral, CoefficientProcess};
use crate::process::AdaptedProcess;
use crate::solver::Generator;

use super::report::{AssumptionReport, Verdict, Witness};
use super::sampler::{draw_tuple, SamplerConfig, Tuple};

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn eval(g: &dyn Generator, path: usize, step: usize, t: f64, y: &[f64], z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.k()];
    g.eval(path, step, t, y, z, &mut out);
    out
}

/// Runs `side` on every sampled tuple and folds the comparisons
/// `lhs <= rhs` into a report.
fn run_tuples<F>(
    name: &str,
    cfg: &SamplerConfig,
    grid: &TimeGrid,
    paths: usize,
    k: usize,
    kd: usize,
    side: F,
) -> Result<AssumptionReport>
where
    F: Fn(&Tuple, f64) -> (f64, f64) + Sync,
{
    cfg.validate()?;
    let steps = grid.steps();
    let results: Vec<(usize, f64, f64, bool)> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| {
            let tuple = draw_tuple(cfg, j, paths, steps, k, kd);
            let (lhs, rhs) = side(&tuple, grid.time(tuple.step));
            let violated = !(lhs.is_finite() && rhs.is_finite()) || lhs - rhs > cfg.tolerance(lhs, rhs);
            (j, lhs, rhs, violated)
        })
        .collect();
    let mut report = AssumptionReport::new(name);
    report.samples = cfg.samples;
    let mut best: Option<(f64, usize, f64, f64)> = None;
    for &(j, lhs, rhs, violated) in &results {
        let margin = if lhs.is_finite() && rhs.is_finite() {
            lhs - rhs
        } else {
            f64::INFINITY
        };
        report.worst_margin = report.worst_margin.max(margin);
        if violated {
            report.violations += 1;
            if best.is_none_or(|b| margin > b.0) {
                best = Some((margin, j, lhs, rhs));
            }
        }
    }
    if let Some((margin, j, lhs, rhs)) = best {
        let t = draw_tuple(cfg, j, paths, steps, k, kd);
        report.witness = Some(Witness {
            index: j,
            seed: cfg.seed,
            path: t.path,
            step: t.step,
            t: grid.time(t.step),
            y1: t.y1,
            y2: t.y2,
            z1: t.z1,
            z2: t.z2,
            lhs,
            rhs,
            margin,
        });
    }
    report.finish();
    Ok(report)
}

fn check_modulus(rho: &ModulusFunction) -> Result<f64> {
    validate(rho, &SamplingConfig::default())?;
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
    linear_bound_constant(rho, &grid)
}

fn check_layout(g: &dyn Generator, c: &CoefficientProcess) -> Result<()> {
    if c.process.dim() != 1 {
        return Err(Error::Argument("coefficient process must be scalar".into()));
    }
    if g.k() == 0 || g.d() == 0 {
        return Err(Error::Argument("generator dimensions must be positive".into()));
    }
    Ok(())
}

/// `⟨Δy/|Δy|, g(y₁,z) − g(y₂,z)⟩` with the convention `0` when `Δy = 0`.
fn directional(g: &dyn Generator, t: &Tuple, time: f64) -> (f64, f64) {
    let dy = diff(&t.y1, &t.y2);
    let n = norm(&dy);
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let g1 = eval(g, t.path, t.step, time, &t.y1, &t.z1);
    let g2 = eval(g, t.path, t.step, time, &t.y2, &t.z1);
    let inner: f64 = dy.iter().zip(g1.iter().zip(&g2)).map(|(d, (a, b))| d * (a - b)).sum();
    (inner / n, n)
}

fn record_u(report: &mut AssumptionReport, u: &CoefficientProcess) {
    let audit = u.audit();
    report.constant("u_integral_max", audit.max_integral);
}

/// One-sided Osgood condition `⟨ŷ, Δg⟩ <= u_t ρ(|Δy|)`.
pub fn check_h1(
    g: &dyn Generator,
    u: &CoefficientProcess,
    rho: &ModulusFunction,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    check_layout(g, u)?;
    let a = check_modulus(rho)?;
    let mut r = run_tuples("H1", cfg, u.process.grid(), u.paths(), g.k(), g.k() * g.d(), |t, time| {
        let (lhs, n) = directional(g, t, time);
        (lhs, u.value(t.path, t.step) * rho.eval(n))
    })?;
    r.constant("rho_linear_bound_A", a);
    record_u(&mut r, u);
    Ok(r)
}

/// `|Δy|^{p−1} ⟨ŷ, Δg⟩ <= u_t κ(|Δy|^p)`.
pub fn check_h1a_p(
    g: &dyn Generator,
    u: &CoefficientProcess,
    kappa: &ModulusFunction,
    p: f64,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    check_layout(g, u)?;
    let a = check_modulus(kappa)?;
    let mut r = run_tuples("H1a_p", cfg, u.process.grid(), u.paths(), g.k(), g.k() * g.d(), |t, time| {
        let (inner, n) = directional(g, t, time);
        (n.powf(p - 1.0) * inner, u.value(t.path, t.step) * kappa.eval(n.powf(p)))
    })?;
    r.constant("p", p);
    r.constant("kappa_linear_bound_A", a);
    record_u(&mut r, u);
    Ok(r)
}

/// `⟨ŷ, Δg⟩ <= u_t ϱ(|Δy|^p)^{1/p}`.
pub fn check_h1b_p(
    g: &dyn Generator,
    u: &CoefficientProcess,
    varrho: &ModulusFunction,
    p: f64,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p must exceed 1, got {p}")));
    }
    check_layout(g, u)?;
    let a = check_modulus(varrho)?;
    let mut r = run_tuples("H1b_p", cfg, u.process.grid(), u.paths(), g.k(), g.k() * g.d(), |t, time| {
        let (inner, n) = directional(g, t, time);
        (inner, u.value(t.path, t.step) * varrho.eval(n.powf(p)).powf(1.0 / p))
    })?;
    r.constant("p", p);
    r.constant("varrho_linear_bound_A", a);
    record_u(&mut r, u);
    Ok(r)
}

/// Points of the y-net used for `ψ_r`.
pub fn y_net(k: usize, r: f64, seed: u64) -> Vec<Vec<f64>> {
    const SIDE: usize = 64;
    match k {
        1 => (0..SIDE)
            .map(|i| vec![-r + 2.0 * r * i as f64 / (SIDE - 1) as f64])
            .collect(),
        2 => {
            let mut pts = Vec::with_capacity(SIDE * SIDE);
            for a in 0..SIDE {
                let rad = r * (a + 1) as f64 / SIDE as f64;
                for b in 0..SIDE {
                    let th = 2.0 * std::f64::consts::PI * b as f64 / SIDE as f64;
                    pts.push(vec![rad * th.cos(), rad * th.sin()]);
                }
            }
            pts.push(vec![0.0, 0.0]);
            pts
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = vec![vec![0.0; k]];
            while pts.len() < SIDE * SIDE {
                let v: Vec<f64> = (0..k).map(|_| rng.random_range(-r..=r)).collect();
                if norm(&v) <= r {
                    pts.push(v);
                }
            }
            pts
        }
    }
}

/// Largest number of paths used for the `ψ_r` estimate.
pub const H2_MAX_PATHS: usize = 200;

/// Growth in `y`: `E[∫₀ᵀ ψ_r dt]` with `ψ_r = sup_{|y|<=r} |g(t,y,0)|` over a
/// y-net, plus a continuity probe along converging sequences.
pub fn check_h2(
    g: &dyn Generator,
    grid: &TimeGrid,
    paths: usize,
    radii: &[f64],
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    cfg.validate()?;
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Argument("radii must be positive and nonempty".into()));
    }
    let (k, kd) = (g.k(), g.k() * g.d());
    let used = paths.min(H2_MAX_PATHS);
    let zero_z = vec![0.0; kd];
    let mut report = AssumptionReport::new("H2");
    let mut samples = 0;
    for &r in radii {
        let net = y_net(k, r, cfg.seed);
        let per_path: Vec<f64> = (0..used)
            .into_par_iter()
            .map(|p| {
                let mut acc = 0.0;
                for i in 0..grid.steps() {
                    let t = grid.time(i);
                    let psi = net
                        .iter()
                        .map(|y| norm(&eval(g, p, i, t, y, &zero_z)))
                        .fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
                    acc += psi * grid.dt(i);
                }
                acc
            })
            .collect();
        samples += used * grid.steps() * net.len();
        let est = Estimate::from_samples(&per_path);
        if !est.mean.is_finite() {
            report.violations += 1;
            report.notes.push(format!("psi_r integral is not finite for r = {r}"));
        }
        report.constant(format!("psi_integral_r{r}"), est.mean);
        report.constant(format!("psi_integral_r{r}_stderr"), est.std_error);
        report.constant(format!("net_points_r{r}"), net.len() as f64);
    }
    // continuity probe: |g(y + 2^{-j} e) − g(y)| must shrink to the tolerance
    let probes = cfg.samples.min(2_000);
    let probe_fail: Vec<(usize, f64)> = (0..probes)
        .into_par_iter()
        .filter_map(|j| {
            let t = draw_tuple(cfg, j, paths, grid.steps(), k, kd);
            let time = grid.time(t.step);
            let base = eval(g, t.path, t.step, time, &t.y1, &t.z1);
            let dir = diff(&t.y2, &t.y1);
            let dn = norm(&dir).max(f64::MIN_POSITIVE);
            let y: Vec<f64> = t.y1.iter().zip(&dir).map(|(a, d)| a + d / dn * 2f64.powi(-40)).collect();
            let near = eval(g, t.path, t.step, time, &y, &t.z1);
            let gap = norm(&diff(&near, &base));
            let scale = norm(&base);
            (!(gap <= cfg.abs_tol + cfg.rel_tol * scale)).then_some((j, gap))
        })
        .collect();
    samples += probes;
    report.samples = samples;
    report.constant("continuity_probes", probes as f64);
    report.constant("continuity_failures", probe_fail.len() as f64);
    if !probe_fail.is_empty() {
        report.violations += probe_fail.len();
        report.notes.push("continuity probe failed".into());
    }
    report.worst_margin = probe_fail.iter().map(|f| f.1).fold(0.0, f64::max);
    report.notes.push(format!(
        "sup over |y| <= r taken on a finite net (64^min(k,2) points) using {used} paths"
    ));
    report.finish();
    Ok(report)
}

/// Stochastic Lipschitz condition in `z`: `|g(y,z₁) − g(y,z₂)| <= v_t |z₁ − z₂|`.
pub fn check_h3(g: &dyn Generator, v: &CoefficientProcess, cfg: &SamplerConfig) -> Result<AssumptionReport> {
    check_layout(g, v)?;
    let mut r = run_tuples("H3", cfg, v.process.grid(), v.paths(), g.k(), g.k() * g.d(), |t, time| {
        let a = eval(g, t.path, t.step, time, &t.y1, &t.z1);
        let b = eval(g, t.path, t.step, time, &t.y1, &t.z2);
        (norm(&diff(&a, &b)), v.value(t.path, t.step) * norm(&diff(&t.z1, &t.z2)))
    })?;
    let sq = pathwise_integral(&v.process, 2.0)?;
    r.constant("v_sq_integral_max", sq.max);
    Ok(r)
}

/// Sub-linear growth in `z`: `|g(y,z) − g(y,0)| <= γ_t (g¹ + g² + |y| + |z|)^α`,
/// with pathwise audits of the integrability of `γ`.
pub fn check_h4(
    g: &dyn Generator,
    gamma: &CoefficientProcess,
    alpha: f64,
    g1: &AdaptedProcess,
    g2: &AdaptedProcess,
    cfg: &SamplerConfig,
) -> Result<AssumptionReport> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    check_layout(g, gamma)?;
    let zero_z = vec![0.0; g.k() * g.d()];
    let mut r = run_tuples("H4", cfg, gamma.process.grid(), gamma.paths(), g.k(), g.k() * g.d(), |t, time| {
        let a = eval(g, t.path, t.step, time, &t.y1, &t.z1);
        let b = eval(g, t.path, t.step, time, &t.y1, &zero_z);
        let base = g1.scalar(t.path, t.step) + g2.scalar(t.path, t.step) + norm(&t.y1) + norm(&t.z1);
        (norm(&diff(&a, &b)), gamma.value(t.path, t.step) * base.powf(alpha))
    })?;
    let grid = gamma.process.grid();
    let e1 = 1.0 / (1.0 - alpha);
    let e2 = 2.0 / (2.0 - alpha);
    let mut worst_31: f64 = 0.0;
    let mut worst_33: f64 = 0.0;
    let mut pointwise_failures = 0usize;
    for p in 0..gamma.paths() {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..grid.steps() {
            let x = gamma.value(p, i);
            let lhs = x.powf(e2);
            let rhs = x + x.powf(e1);
            if lhs > rhs * (1.0 + 1e-12) {
                pointwise_failures += 1;
            }
            a += rhs * grid.dt(i);
            b += lhs * grid.dt(i);
        }
        worst_31 = worst_31.max(a);
        worst_33 = worst_33.max(b);
    }
    r.constant("alpha", alpha);
    r.constant("gamma_integrability_max", worst_31);
    r.constant("gamma_power_integral_max", worst_33);
    r.constant("gamma_pointwise_failures", pointwise_failures as f64);
    let g1_int: Vec<f64> = (0..g1.paths())
        .map(|p| (0..grid.steps()).map(|i| g1.scalar(p, i).abs() * grid.dt(i)).sum())
        .collect();
    let g2_sup: Vec<f64> = (0..g2.paths())
        .map(|p| (0..g2.nodes()).map(|i| g2.scalar(p, i).abs()).fold(0.0, f64::max))
        .collect();
    r.constant("g1_integral_mean", Estimate::from_samples(&g1_int).mean);
    r.constant("g2_sup_mean", Estimate::from_samples(&g2_sup).mean);
    if pointwise_failures > 0 || worst_33 > worst_31 * (1.0 + 1e-12) + 1e-15 || !worst_31.is_finite() {
        r.violations += 1;
        r.notes.push("gamma integrability audit failed".into());
        r.finish();
    }
    Ok(r)
}

/// Integrability of the data: `E[|ξ| + ∫₀ᵀ |g(t,0,0)| dt]`.
pub fn check_h5(xi: &[f64], g: &dyn Generator, grid: &TimeGrid, paths: usize) -> Result<AssumptionReport> {
    let k = g.k();
    if xi.len() != paths * k {
        return Err(Error::Argument("terminal samples do not match paths x k".into()));
    }
    let zy = vec![0.0; k];
    let zz = vec![0.0; k * g.d()];
    let per_path: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut acc = norm(&xi[p * k..(p + 1) * k]);
            for i in 0..grid.steps() {
                acc += norm(&eval(g, p, i, grid.time(i), &zy, &zz)) * grid.dt(i);
            }
            acc
        })
        .collect();
    let est = Estimate::from_samples(&per_path);
    let mut r = AssumptionReport::new("H5");
    r.samples = paths;
    r.worst_margin = 0.0;
    r.constant("estimate", est.mean);
    r.constant("std_error", est.std_error);
    if !est.mean.is_finite() {
        r.violations = 1;
        r.finish();
    } else if est.std_error > 0.1 * est.mean {
        r.verdict = Verdict::Inconclusive;
        r.notes.push("standard error exceeds 10% of the estimate".into());
    }
    Ok(r)
}

/// Recomputes `(lhs, rhs)` of an H1 comparison at a recorded witness.
pub fn reevaluate_h1(g: &dyn Generator, u: &CoefficientProcess, rho: &ModulusFunction, w: &Witness) -> (f64, f64) {
    let t = Tuple {
        index: w.index,
        path: w.path,
        step: w.step,
        y1: w.y1.clone(),
        y2: w.y2.clone(),
        z1: w.z1.clone(),
        z2: w.z2.clone(),
    };
    let (lhs, n) = directional(g, &t, w.t);
    (lhs, u.value(w.path, w.step) * rho.eval(n))
}
