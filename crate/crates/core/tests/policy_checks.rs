mod common;

use aoii_core::policy::{
    exhaustive_search, grid_costs, optimize_random_sampling, optimize_single_threshold,
    policy_improvement, policy_iteration, value_determination,
};
use aoii_core::sim::simulate;
use aoii_core::{Error, PolicyIterConfig, SimConfig, SimPolicy, SmdpModel};
use common::*;
use rand::Rng;

fn q1_model(tau_max: usize) -> SmdpModel {
    SmdpModel::new(q1(), 0.8, q1_penalties(), tau_max).unwrap()
}

#[test]
fn free_transmissions_mean_always_transmit() {
    for model in [
        q1_model(20),
        SmdpModel::new(q2(), 0.8, q2_penalties(), 20).unwrap(),
    ] {
        let out = policy_iteration(&model, 0.0, PolicyIterConfig::default()).unwrap();
        assert!(out.policy.taus().iter().all(|&t| t == 0));
        assert!(out.iterations <= 2, "{} iterations", out.iterations);
        let (grid, _) = exhaustive_search(&model, 0.0).unwrap();
        assert!(grid.taus().iter().all(|&t| t == 0));
    }
}

#[test]
fn huge_price_pushes_thresholds_to_the_cap() {
    let model = q1_model(15);
    let out = policy_iteration(&model, 1e9, PolicyIterConfig::default()).unwrap();
    assert_eq!(out.policy.taus(), &[15, 15]);
}

#[test]
fn policy_iteration_matches_exhaustive_on_q1() {
    let model = q1_model(20);
    for lambda in 0..=75 {
        let lambda = lambda as f64;
        let pi = policy_iteration(&model, lambda, PolicyIterConfig::default()).unwrap();
        let (grid, cost) = exhaustive_search(&model, lambda).unwrap();
        assert_eq!(pi.policy.taus(), grid.taus(), "lambda {lambda}");
        assert!((pi.eta - cost).abs() <= 1e-9 * cost.max(1.0));
    }
}

#[test]
fn policy_iteration_matches_exhaustive_on_random_sources() {
    let mut rng = rng(51);
    let mut cases = Vec::new();
    for _ in 0..50 {
        cases.push((2, 40));
    }
    for _ in 0..5 {
        cases.push((3, 15));
    }
    for (n, tau_max) in cases {
        let src = random_source(&mut rng, n);
        let pens = (0..n)
            .map(|_| {
                let degree = rng.random_range(0..3);
                random_penalty(&mut rng, degree)
            })
            .collect();
        let model = SmdpModel::new(src, rng.random_range(0.2..=1.0), pens, tau_max).unwrap();
        let lambda = rng.random_range(0.0..100.0);
        let pi = policy_iteration(&model, lambda, PolicyIterConfig::default()).unwrap();
        let (_, best) = exhaustive_search(&model, lambda).unwrap();
        // Tied optima may differ in thresholds; the cost may not.
        assert!(
            pi.eta <= best + 1e-9 * best.max(1.0),
            "PI {} vs grid {best} at lambda {lambda}",
            pi.eta
        );
    }
}

#[test]
fn value_determination_agrees_with_ratio_formula() {
    let model = SmdpModel::new(q2(), 0.8, q2_penalties(), 20).unwrap();
    let mut rng = rng(52);
    for _ in 0..20 {
        let taus: Vec<usize> = (0..3).map(|_| rng.random_range(0..=20)).collect();
        let lambda = rng.random_range(0.0..60.0);
        let params = model.policy_params(&taus).unwrap();
        let (eta, values) = value_determination(&params, lambda).unwrap();
        let direct = model.average_cost(&taus, lambda).unwrap();
        assert!((eta - direct).abs() <= 1e-9 * direct.max(1.0));
        assert_eq!(values[2], 0.0);
        for j in 0..3 {
            let rhs = params[j].r(lambda) - eta * params[j].d
                + params[j]
                    .p
                    .iter()
                    .zip(&values)
                    .map(|(p, v)| p * v)
                    .sum::<f64>();
            assert!((values[j] - rhs).abs() <= 1e-8 * rhs.abs().max(1.0));
        }
    }
}

#[test]
fn optimum_is_a_fixed_point_and_eta_is_monotone() {
    let model = SmdpModel::new(q2(), 0.8, q2_penalties(), 30).unwrap();
    for lambda in [1.0, 5.0, 10.0, 50.0, 200.0] {
        let out = policy_iteration(&model, lambda, PolicyIterConfig::default()).unwrap();
        assert!(out.converged);
        let again = policy_improvement(&model, lambda, out.eta, &out.values).unwrap();
        assert_eq!(again.taus(), out.policy.taus());
        for w in out.eta_history.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0),
                "{:?}",
                out.eta_history
            );
        }
    }
}

#[test]
fn iteration_cap_is_reported() {
    let model = q1_model(20);
    let cfg = PolicyIterConfig {
        eps_eta: 1e-300,
        max_iters: 1,
    };
    assert!(matches!(
        policy_iteration(
            &model,
            70.0,
            PolicyIterConfig {
                eps_eta: 0.0,
                max_iters: 5
            }
        ),
        Err(Error::InvalidConfig(_))
    ));
    assert!(matches!(
        policy_iteration(&model, 70.0, cfg),
        Err(Error::NonConvergence { .. })
    ));
}

#[test]
fn single_threshold_is_the_grid_diagonal_and_never_beats_multi() {
    let model = SmdpModel::new(q2(), 0.8, q2_penalties(), 12).unwrap();
    for lambda in [0.0, 1.0, 5.0, 10.0, 50.0] {
        let (tau, st) = optimize_single_threshold(&model, lambda).unwrap();
        let diag = (0..=12)
            .map(|t| (t, model.average_cost(&[t, t, t], lambda).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(tau, diag.0);
        assert_eq!(st, diag.1);
        let pi = policy_iteration(&model, lambda, PolicyIterConfig::default()).unwrap();
        assert!(pi.eta <= st + 1e-12 * st, "{} > {st}", pi.eta);
    }
}

#[test]
fn grid_is_lexicographic_and_guarded() {
    let model = q1_model(3);
    let grid = grid_costs(&model, 1.0).unwrap();
    assert_eq!(grid.len(), 16);
    assert_eq!(grid[0].0, vec![0, 0]);
    assert_eq!(grid[1].0, vec![0, 1]);
    assert_eq!(grid[15].0, vec![3, 3]);

    let src = random_source(&mut rng(53), 8);
    let pens = (0..8).map(|_| random_penalty(&mut rng(54), 1)).collect();
    let big = SmdpModel::new(src, 0.8, pens, 10).unwrap();
    assert!(matches!(
        exhaustive_search(&big, 1.0),
        Err(Error::GridTooLarge { .. })
    ));
}

#[test]
fn random_sampling_at_zero_price_transmits_always() {
    let sim = SimConfig::new(SimPolicy::RandomSampling(1.0), 200_000, 8, 7);
    let grid = [0.25, 0.5, 0.75, 1.0];
    let rs = optimize_random_sampling(&q2(), 0.8, &q2_penalties(), 0.0, &grid, &sim).unwrap();
    assert_eq!(rs.alpha, 1.0);

    // alpha = 1 is the always-transmit threshold policy.
    let model = SmdpModel::new(q2(), 0.8, q2_penalties(), 5).unwrap();
    let exact = model.average_cost(&[0, 0, 0], 3.0).unwrap();
    let stats = simulate(&q2(), 0.8, &q2_penalties(), 3.0, &sim).unwrap();
    assert!((stats.mean_cost - exact).abs() <= stats.ci95.max(0.01 * exact));

    assert!(optimize_random_sampling(&q2(), 0.8, &q2_penalties(), 0.0, &[], &sim).is_err());
    assert!(optimize_random_sampling(&q2(), 0.8, &q2_penalties(), 0.0, &[0.0], &sim).is_err());
}
