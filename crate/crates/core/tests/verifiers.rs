use std::sync::Arc;

use bsde_core::examples::{build_problem, example_coefficients, h_modulus, ExampleId, ExampleSpec};
use bsde_core::modulus::ModulusFunction;
use bsde_core::paths::{CoefficientProcess, PathEnsemble};
use bsde_core::solver::{FnGenerator, Generator};
use bsde_core::verifiers::*;
use bsde_core::{AdaptedProcess, TimeGrid};

fn ensemble(steps: usize, paths: usize, d: usize, seed: u64) -> Arc<PathEnsemble> {
    let grid = Arc::new(TimeGrid::uniform(1.0, steps).unwrap());
    Arc::new(PathEnsemble::simulate(grid, paths, d, seed).unwrap())
}

fn zero_coeff(ens: &PathEnsemble) -> CoefficientProcess {
    CoefficientProcess::constant(Arc::clone(ens.grid_arc()), ens.paths(), 0.0, 1).unwrap()
}

fn linear(c: f64) -> FnGenerator {
    FnGenerator::new("c*y", 1, 1, false, move |_, _, _, y, _, out| out[0] = c * y[0])
}

fn cfg(samples: usize) -> SamplerConfig {
    SamplerConfig::default().with_samples(samples).with_seed(7)
}

#[test]
fn h1_passes_for_decreasing_driver() {
    let ens = ensemble(20, 50, 1, 1);
    let r = check_h1(&linear(-1.0), &zero_coeff(&ens), &ModulusFunction::identity(), &cfg(20_000)).unwrap();
    assert_eq!(r.verdict, Verdict::NoViolationFound);
    assert_eq!(r.violations, 0);
    assert_eq!(r.samples, 20_000);
}

#[test]
fn h1_witness_for_quadratic_driver_is_reproducible() {
    let ens = ensemble(20, 50, 1, 1);
    let g = FnGenerator::new("y^2", 1, 1, false, |_, _, _, y, _, out| out[0] = y[0] * y[0]);
    let u = zero_coeff(&ens);
    let rho = ModulusFunction::identity();
    let r = check_h1(&g, &u, &rho, &cfg(20_000)).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    let w = r.witness.as_ref().unwrap();
    assert!(w.y1[0] + w.y2[0] > 0.0, "witness should sit at same-sign large y");
    let (lhs, rhs) = reevaluate_h1(&g, &u, &rho, w);
    assert_eq!(lhs, w.lhs);
    assert_eq!(rhs, w.rhs);
    assert_eq!(lhs - rhs, w.margin);
    let again = check_h1(&g, &u, &rho, &cfg(20_000)).unwrap();
    assert_eq!(again.witness, r.witness);
}

#[test]
fn h1a_and_h1b_on_linear_driver() {
    let ens = ensemble(20, 50, 1, 1);
    let u = zero_coeff(&ens);
    let id = ModulusFunction::identity();
    let g = linear(-1.0);
    assert!(check_h1a_p(&g, &u, &id, 2.0, &cfg(10_000)).unwrap().passed());
    assert!(check_h1b_p(&g, &u, &id, 2.0, &cfg(10_000)).unwrap().passed());
    assert!(check_h1a_p(&g, &u, &id, 1.0, &cfg(10)).is_err());
}

#[test]
fn implication_chain_on_shared_samples() {
    // (H1b)_p with ϱ ⟹ (H1) with ρ = ϱ^{1/p}(x^p) ⟹ (H1a)_p with κ(x) = x^{1−1/p} ρ(x^{1/p})
    let ens = ensemble(20, 50, 1, 3);
    let u = CoefficientProcess::constant(Arc::clone(ens.grid_arc()), 50, 1.0, 1).unwrap();
    let p = 2.0;
    let varrho = ModulusFunction::identity();
    let rho = ModulusFunction::from_mao_modulus(&varrho, p);
    let kappa = rho.monotonicity_modulus(p);
    let c = cfg(20_000);
    for g in [linear(-1.0), linear(0.5), linear(1.0)] {
        let b = check_h1b_p(&g, &u, &varrho, p, &c).unwrap();
        let h = check_h1(&g, &u, &rho, &c).unwrap();
        let a = check_h1a_p(&g, &u, &kappa, p, &c).unwrap();
        if b.passed() {
            assert!(h.passed(), "{}", g.label());
        }
        if h.passed() {
            assert!(a.passed(), "{}", g.label());
        }
    }
    // a driver violating (H1) at a witness also violates (H1b)_p there
    let g = linear(3.0);
    let h = check_h1(&g, &u, &rho, &c).unwrap();
    assert_eq!(h.verdict, Verdict::Violated);
    let w = h.witness.unwrap();
    let n = (w.y1[0] - w.y2[0]).abs();
    let rhs_b = varrho.eval(n.powf(p)).powf(1.0 / p);
    assert!(w.lhs > rhs_b);
}

#[test]
fn h2_growth_estimates() {
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let c = cfg(500);
    let r = check_h2(&linear(-1.0), &grid, 20, &[1.0, 3.0], &c).unwrap();
    assert!((r.constants["psi_integral_r1"] - 1.0).abs() < 1e-12);
    assert!((r.constants["psi_integral_r3"] - 3.0).abs() < 1e-12);
    assert!(r.passed());
    let bounded = FnGenerator::new("sin", 1, 1, false, |_, _, _, y, _, out| out[0] = 0.5 * y[0].sin());
    let r = check_h2(&bounded, &grid, 20, &[100.0], &c).unwrap();
    assert!(r.constants["psi_integral_r100"] <= 0.5 + 1e-12);
    let jump = FnGenerator::new("sign", 1, 1, false, |_, _, _, y, _, out| out[0] = if y[0] > 0.0 { 1.0 } else { 0.0 });
    let c = SamplerConfig { corner_gaps: vec![1e-12], corner_period: 1, y_radius: 1e-13, ..cfg(200) };
    let r = check_h2(&jump, &grid, 20, &[1.0], &c).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
}

#[test]
fn h3_lipschitz_in_z() {
    let ens = ensemble(20, 100, 1, 5);
    let spec = ExampleSpec::new(ExampleId::Example1);
    let ex = build_problem(&spec, Arc::clone(&ens)).unwrap();
    let v = ex.problem.coefficients.v.clone().unwrap();
    let r = check_h3(ex.problem.generator.as_ref(), &v, &cfg(20_000)).unwrap();
    assert_eq!(r.violations, 0, "{:?}", r.witness);
    let r = check_h3(&linear(-1.0), &zero_coeff(&ens), &cfg(5_000)).unwrap();
    assert!(r.passed());
    let broken = build_problem(&ExampleSpec::new(ExampleId::BrokenZLipschitz), ens).unwrap();
    let r = check_h3(broken.problem.generator.as_ref(), &v, &cfg(20_000)).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    let w = r.witness.unwrap();
    assert!(w.lhs > 1.5 * w.rhs);
}

#[test]
fn h4_sublinear_growth() {
    let ens = ensemble(20, 100, 1, 5);
    let spec = ExampleSpec::new(ExampleId::Example2);
    let ex = build_problem(&spec, Arc::clone(&ens)).unwrap();
    let c = &ex.problem.coefficients;
    let r = check_h4(
        ex.problem.generator.as_ref(),
        c.gamma.as_ref().unwrap(),
        0.5,
        c.g1.as_ref().unwrap(),
        c.g2.as_ref().unwrap(),
        &cfg(20_000),
    )
    .unwrap();
    assert_eq!(r.violations, 0, "{:?}", r.witness);
    assert_eq!(r.constants["gamma_pointwise_failures"], 0.0);
    assert!(r.constants["gamma_power_integral_max"] <= r.constants["gamma_integrability_max"]);
    assert!(check_h4(&linear(1.0), c.gamma.as_ref().unwrap(), 1.0, c.g1.as_ref().unwrap(), c.g2.as_ref().unwrap(), &cfg(10)).is_err());
}

#[test]
fn h5_integrability() {
    let grid = TimeGrid::uniform(1.0, 1000).unwrap();
    let zero = FnGenerator::zero(1, 1);
    let r = check_h5(&vec![0.0; 100], &zero, &grid, 100).unwrap();
    assert_eq!(r.constants["estimate"], 0.0);

    let ens = ensemble(10, 20_000, 1, 11);
    let xi: Vec<f64> = (0..20_000).map(|p| ens.position(p, 10)[0]).collect();
    let r = check_h5(&xi, &zero, ens.grid(), 20_000).unwrap();
    let target = (2.0 / std::f64::consts::PI).sqrt();
    assert!((r.constants["estimate"] - target).abs() < 4.0 * r.constants["std_error"]);
    assert_eq!(r.verdict, Verdict::NoViolationFound);

    let decay = FnGenerator::new("exp(-t)", 1, 1, false, |_, _, t, _, _, out| out[0] = (-t).exp());
    let r = check_h5(&[0.0; 10], &decay, &grid, 10).unwrap();
    assert!((r.constants["estimate"] - (1.0 - (-1.0f64).exp())).abs() < 1e-3);
}

#[test]
fn example1_assumption_audit() {
    let ens = ensemble(20, 200, 1, 2);
    let ex = build_problem(&ExampleSpec::new(ExampleId::Example1), Arc::clone(&ens)).unwrap();
    let (u, v) = example_coefficients(&ens, 1.0).unwrap();
    assert!(u.audit().passed());
    assert!(v.audit().passed());
    let g = ex.problem.generator.as_ref();
    let h = h_modulus(0.1353352832366127).unwrap();
    let r = check_h1(g, &u, &h, &cfg(20_000)).unwrap();
    // the exponential cross terms dominate along y = (a, −a) directions
    assert_eq!(r.verdict, Verdict::Violated);
    let w = r.witness.unwrap();
    assert!(w.y1[0] - w.y2[0] > 0.0 && w.y1[1] - w.y2[1] < 0.0 || w.y1[0] - w.y2[0] < 0.0 && w.y1[1] - w.y2[1] > 0.0);
    let (lhs, rhs) = reevaluate_h1(g, &u, &h, &w);
    assert_eq!((lhs, rhs), (w.lhs, w.rhs));
    let r = check_h2(g, ens.grid(), ens.paths(), &[1.0, 5.0], &cfg(2_000)).unwrap();
    assert!(r.passed(), "{:?}", r.notes);
}

#[test]
fn reports_serialize() {
    let ens = ensemble(5, 10, 1, 1);
    let r = check_h1(&linear(-1.0), &zero_coeff(&ens), &ModulusFunction::identity(), &cfg(100)).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"no-violation-found\""));
}

fn scalar(ens: &PathEnsemble, f: impl Fn(usize, usize) -> f64) -> AdaptedProcess {
    let mut x = AdaptedProcess::zeros(Arc::clone(ens.grid_arc()), ens.paths(), 1);
    for p in 0..ens.paths() {
        for i in 0..=ens.steps() {
            x.at_mut(p, i)[0] = f(p, i);
        }
    }
    x
}

#[test]
fn condition_3_4_oracles() {
    let ens = ensemble(200, 20_000, 1, 4);
    let b = ens.brownian_process();
    let zero = zero_coeff(&ens);
    assert_eq!(condition_3_4_estimate(&zero, &b).unwrap().mean, 0.0);
    let one = CoefficientProcess::constant(Arc::clone(ens.grid_arc()), ens.paths(), 1.0, 1).unwrap();
    let est = condition_3_4_estimate(&one, &b).unwrap();
    let exact = 2.0 / 3.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((est.mean - exact).abs() < 4.0 * est.std_error + 5e-3, "{est:?}");
}

#[test]
fn class_d_curves() {
    let ens = ensemble(50, 20_000, 1, 9);
    let bounded = scalar(&ens, |p, i| (ens.position(p, i)[0]).clamp(-0.5, 0.5));
    let curve = class_D_diagnostic(&bounded, &[0.6, 1.0, 2.0]).unwrap();
    assert!(curve.points.iter().all(|p| p.value.mean == 0.0));

    let b = ens.brownian_process();
    let lambdas = [0.5, 1.0, 1.5, 2.0, 3.0];
    let curve = class_D_diagnostic(&b, &lambdas).unwrap();
    assert!(curve.nonincreasing);
    for pt in &curve.points {
        let l = pt.lambda;
        let tail = 2.0 * (-l * l / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((pt.deterministic.mean - tail).abs() < 4.0 * pt.deterministic.std_error + 1e-3, "{pt:?}");
        assert!(pt.value.mean >= pt.deterministic.mean);
    }
    assert!(class_D_diagnostic(&b, &[1.0, 0.5]).is_err());
}

#[test]
fn class_d_on_example_scale_solution_decreases() {
    let ens = ensemble(20, 2_000, 1, 12);
    let spec = ExampleSpec::new(ExampleId::OracleExponential);
    let ex = build_problem(&spec, ens).unwrap();
    let sol = bsde_core::solver::solve_z_independent(&ex.problem).unwrap();
    let curve = class_D_diagnostic(&sol.y, &[0.5, 1.0, 2.0, 4.0, 8.0]).unwrap();
    assert!(curve.nonincreasing);
    assert!(curve.points.last().unwrap().value.mean < curve.points[0].value.mean);
}
