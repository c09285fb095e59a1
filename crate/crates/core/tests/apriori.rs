use std::sync::Arc;

use bsde_core::examples::{build_problem, ExampleId, ExampleSpec, TerminalSelector};
use bsde_core::norms::compute_norms;
use bsde_core::paths::PathEnsemble;
use bsde_core::solver::{solve_z_independent, BsdeProblem, FnGenerator, PicardConfig, SolutionPair};
use bsde_core::verifiers::{apriori_check, apriori_stability, AprioriData, AprioriKind, DEFAULT_SCALES};
use bsde_core::{AdaptedProcess, TimeGrid};

fn ensemble(steps: usize, paths: usize, seed: u64) -> Arc<PathEnsemble> {
    let grid = Arc::new(TimeGrid::uniform(1.0, steps).unwrap());
    Arc::new(PathEnsemble::simulate(grid, paths, 1, seed).unwrap())
}

fn martingale(paths: usize) -> BsdeProblem {
    let spec = ExampleSpec {
        terminal: Some(TerminalSelector::Brownian),
        ..ExampleSpec::new(ExampleId::OracleMartingale)
    };
    build_problem(&spec, ensemble(50, paths, 21)).unwrap().problem
}

fn data() -> AprioriData {
    AprioriData {
        m_const: 1.0,
        ..AprioriData::default()
    }
}

#[test]
fn zero_solution_is_degenerate() {
    let ens = ensemble(10, 100, 1);
    let problem = BsdeProblem::new(Arc::new(FnGenerator::zero(1, 1)), vec![0.0; 100], Arc::clone(&ens)).unwrap();
    let sol = solve_z_independent(&problem).unwrap();
    for kind in [AprioriKind::A1, AprioriKind::A2, AprioriKind::A3] {
        let r = apriori_check(&sol, &problem, 1.5, kind, &data()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.lhs.mean, 0.0);
        assert_eq!(r.rhs.mean, 0.0);
        assert_eq!(r.ratio, None);
    }
}

#[test]
fn martingale_sides() {
    let problem = martingale(10_000);
    let sol = solve_z_independent(&problem).unwrap();
    let p = 1.5;
    let r = apriori_check(&sol, &problem, p, AprioriKind::A1, &data()).unwrap();
    assert!((r.lhs.mean - 1.0).abs() < 0.05, "{r:?}");
    let sup: Vec<f64> = (0..problem.paths())
        .map(|q| (0..=50).map(|i| problem.ensemble.position(q, i)[0].abs()).fold(0.0, f64::max).powf(p))
        .collect();
    let sup_mean = sup.iter().sum::<f64>() / sup.len() as f64;
    assert!((r.rhs.mean - 2f64.powf(p / 2.0) * sup_mean).abs() < 0.05 * r.rhs.mean, "{r:?}");
    assert!(apriori_check(&sol, &problem, 1.0, AprioriKind::A2, &data()).is_err());
    assert!(apriori_check(&sol, &problem, 0.5, AprioriKind::A1, &data()).is_ok());
}

fn permuted(sol: &SolutionPair, problem: &BsdeProblem, order: &[usize]) -> (SolutionPair, BsdeProblem) {
    let y = sol.y.select_paths(order);
    let z = sol.z.select_paths(order);
    let norms = compute_norms(&y, &z, &[0.5]).unwrap();
    let mut p = problem.clone();
    p.terminal = order.iter().map(|&q| problem.terminal[q]).collect();
    (
        SolutionPair {
            y,
            z,
            norms,
            steps: sol.steps.clone(),
        },
        p,
    )
}

#[test]
fn ratio_is_permutation_invariant() {
    let problem = martingale(500);
    let sol = solve_z_independent(&problem).unwrap();
    let order: Vec<usize> = (0..500).map(|i| (i * 37 + 11) % 500).collect();
    let (psol, pprob) = permuted(&sol, &problem, &order);
    let f = Some(AdaptedProcess::from_fn(Arc::clone(problem.ensemble.grid_arc()), 500, 1, |p, i, out| {
        out[0] = problem.ensemble.position(p, i)[0].abs()
    }));
    let d = AprioriData { f, ..data() };
    for kind in [AprioriKind::A1, AprioriKind::A2, AprioriKind::A3] {
        let a = apriori_check(&sol, &problem, 1.5, kind, &d).unwrap();
        let pd = AprioriData {
            f: d.f.as_ref().map(|f| f.select_paths(&order)),
            ..d.clone()
        };
        let b = apriori_check(&psol, &pprob, 1.5, kind, &pd).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn scaling_multiplies_leading_terms() {
    let problem = martingale(4_000);
    let sol = solve_z_independent(&problem).unwrap();
    let mut scaled = problem.clone();
    scaled.terminal.iter_mut().for_each(|x| *x *= 4.0);
    let ssol = solve_z_independent(&scaled).unwrap();
    let p = 1.5;
    let a = apriori_check(&sol, &problem, p, AprioriKind::A1, &data()).unwrap();
    let b = apriori_check(&ssol, &scaled, p, AprioriKind::A1, &data()).unwrap();
    let factor = 4f64.powf(p);
    assert!((b.lhs.mean / a.lhs.mean - factor).abs() < 1e-6 * factor);
    assert!((b.rhs.mean / a.rhs.mean - factor).abs() < 1e-6 * factor);
}

#[test]
fn stability_on_martingale_data() {
    let problem = martingale(2_000);
    let picard = PicardConfig::new(1e-6, 10, vec![0.5]);
    for p in [1.25, 1.5, 2.0] {
        let r = apriori_stability(&problem, p, AprioriKind::A1, &data(), &DEFAULT_SCALES, &picard).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.spread.unwrap() < 1.0 + 1e-6);
    }
}
