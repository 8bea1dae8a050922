mod common;

use common::*;
use multibang::penalty::{ConcentricParams, RadialParams};
use multibang::ssn::{
    active_regions, continuation, newton_operator_apply, parse_stats_table, reduced_residual, ssn_solve, stats_table,
    superlinear_tail, ContinuationMode, IterationStats, StatsRow,
};
use multibang::{Penalty, SolverConfig};
use proptest::prelude::*;
use rand::Rng;

fn chain(seed: u64, nodes: usize, coupling: f64, amp: f64) -> QuadraticModel {
    let mut r = rng(seed);
    QuadraticModel {
        dim: 2,
        weights: (0..nodes).map(|_| r.random_range(0.5..1.5)).collect(),
        target: (0..2 * nodes).map(|_| r.random_range(-amp..amp)).collect(),
        coupling,
    }
}

fn radial() -> RadialParams {
    let third = 2.0 * std::f64::consts::PI / 3.0;
    RadialParams::new(1.0, &[0.0, third, 2.0 * third], 0.05).unwrap()
}

#[test]
fn accepted_steps_strictly_decrease_the_residual() {
    let penalty = radial();
    for seed in 0..5 {
        let model = chain(seed, 40, 2.0, 1.5);
        for gamma in [1.0, 1e-2, 1e-4] {
            let out = ssn_solve(&model, &penalty, &vec![0.0; 80], gamma, &SolverConfig::default());
            let r = &out.stats.residuals;
            assert!(r.windows(2).all(|w| w[1] < w[0]), "γ = {gamma}: {r:?}");
            assert_eq!(r.len(), out.stats.step_sizes.len() + 1);
        }
    }
}

#[test]
fn warm_start_at_a_solution_takes_no_steps() {
    let penalty = ConcentricParams::new(0.01);
    let model = chain(3, 30, 1.0, 2.0);
    let cfg = SolverConfig::default();
    let first = ssn_solve(&model, &penalty, &vec![0.0; 60], 1e-2, &cfg);
    assert!(first.converged);
    let cfg_abs = SolverConfig { rel_tol: 0.0, abs_tol: first.stats.residuals.last().unwrap() * 1.01, ..cfg };
    let again = ssn_solve(&model, &penalty, &first.u, 1e-2, &cfg_abs);
    assert!(again.converged);
    assert_eq!(again.stats.ssn_iterations, 0);
}

#[test]
fn newton_operator_matches_residual_differences() {
    let penalty = radial();
    let mut checked = 0;
    for seed in 0..20 {
        let model = chain(seed, 25, 0.5, 1.0);
        let mut r = rng(seed + 100);
        let u: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        let phi: Vec<f64> = (0..50).map(|_| r.random_range(-1.0..1.0)).collect();
        for gamma in [1.0, 0.1, 0.01] {
            let map = penalty.regularize(gamma);
            let eps = 1e-7;
            let up: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a + eps * b).collect();
            let um: Vec<f64> = u.iter().zip(&phi).map(|(a, b)| a - eps * b).collect();
            let regions = active_regions(&model, map.as_ref(), &u);
            // differences across a region boundary do not see the Newton derivative
            if active_regions(&model, map.as_ref(), &up) != regions || active_regions(&model, map.as_ref(), &um) != regions
            {
                continue;
            }
            let (rp, rm) = (reduced_residual(&model, map.as_ref(), &up), reduced_residual(&model, map.as_ref(), &um));
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            let exact = newton_operator_apply(&model, map.as_ref(), &u, &phi);
            assert!(max_abs_diff(&fd, &exact) <= 1e-5 * norm(&exact).max(1.0), "seed {seed}, γ {gamma}");
            checked += 1;
        }
    }
    assert!(checked >= 30, "only {checked} region-stable samples");
}

#[test]
fn identity_model_recovers_the_target() {
    // without cost the penalty is the hull indicator, so an admissible target is optimal
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let penalty = RadialParams::new(1.0, &[0.0, third, 2.0 * third], 0.0).unwrap();
    let pts = penalty.points().to_vec();
    let nodes = 30;
    let target: Vec<f64> = (0..nodes).flat_map(|i| pts[i % pts.len()].clone()).collect();
    let model = QuadraticModel { dim: 2, weights: vec![1.0; nodes], target: target.clone(), coupling: 0.0 };
    let cfg = SolverConfig { gamma_min: 1e-8, ..SolverConfig::default() };
    let res = continuation(&model, &penalty, &vec![0.0; 2 * nodes], &cfg, ContinuationMode::Fixed).unwrap();
    assert!(res.stats.iter().all(|s| s.converged));
    assert!(res.final_gamma < 1e-7);
    assert!(max_abs_diff(&res.u, &target) <= 1e-6);
}

#[test]
fn fixed_continuation_scales_gamma() {
    let penalty = ConcentricParams::new(0.01);
    let model = chain(8, 20, 1.0, 2.0);
    let cfg = SolverConfig { gamma0: 1.0, gamma_min: 1e-3, reduction: 0.5, ..SolverConfig::default() };
    let res = continuation(&model, &penalty, &vec![0.0; 40], &cfg, ContinuationMode::Fixed).unwrap();
    for w in res.stats.windows(2) {
        assert_eq!(w[1].gamma, w[0].gamma * 0.5);
    }
    assert_eq!(res.stats.len(), 10);
    assert_eq!(res.final_gamma, res.stats.last().unwrap().gamma);
}

#[test]
fn adaptive_continuation_records_accepted_solves() {
    let penalty = ConcentricParams::new(0.01);
    let model = chain(9, 20, 1.0, 2.0);
    let mut cfg = SolverConfig::adaptive_defaults();
    cfg.adaptive.gamma_stop = 1e-6;
    let res = continuation(&model, &penalty, &vec![0.0; 40], &cfg, ContinuationMode::Adaptive).unwrap();
    assert!(res.stats.iter().all(|s| s.converged));
    assert!(res.stats.windows(2).all(|w| w[1].gamma < w[0].gamma));
    assert!(res.final_gamma >= 1e-6);
}

fn solve_record(residuals: &[f64], steps: &[f64]) -> IterationStats {
    IterationStats {
        gamma: 1.0,
        ssn_iterations: steps.len(),
        avg_gmres: 0.0,
        line_searches: steps.iter().filter(|t| **t < 1.0).count(),
        non_multibang: 0,
        converged: true,
        residuals: residuals.to_vec(),
        step_sizes: steps.to_vec(),
    }
}

#[test]
fn tail_ratios_ignore_rounding_noise() {
    let fast = solve_record(&[1.0, 0.5, 1e-2, 1e-5, 1e-11, 2e-11], &[1.0; 5]);
    assert_eq!(superlinear_tail(&fast, 0.1), Some(true));
    let slowing = solve_record(&[1.0, 1e-3, 1e-5, 1e-6, 5e-7], &[1.0; 4]);
    assert_eq!(superlinear_tail(&slowing, 0.1), Some(false));
    let short = solve_record(&[1.0, 1e-3, 1e-9], &[1.0; 2]);
    assert_eq!(superlinear_tail(&short, 0.1), None);
    let damped = solve_record(&[1.0, 0.9, 0.5, 1e-2, 1e-6], &[0.5, 1.0, 1.0, 1.0]);
    assert_eq!(superlinear_tail(&damped, 0.1), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_table_round_trips(
        rows in prop::collection::vec((1e-12f64..1e3, 0usize..500, 0.0f64..1e3, 0usize..50, 0usize..10_000), 0..20)
    ) {
        let stats: Vec<IterationStats> = rows
            .iter()
            .map(|&(gamma, ssn_iterations, avg_gmres, line_searches, non_multibang)| IterationStats {
                gamma,
                ssn_iterations,
                avg_gmres,
                line_searches,
                non_multibang,
                converged: true,
                residuals: vec![],
                step_sizes: vec![],
            })
            .collect();
        let parsed = parse_stats_table(&stats_table(&stats)).unwrap();
        let expected: Vec<StatsRow> = stats.iter().map(StatsRow::from).collect();
        prop_assert_eq!(parsed, expected);
    }
}
