use aoii_core::drph::{expected_penalty_sum, stirling2};
use aoii_core::policy::policy_iteration;
use aoii_core::smdp::eval_state;
use aoii_core::{DrPh, DtmcSource, Matrix, Penalty, PolicyIterConfig, RowVector, SmdpModel};
use num_bigint::BigUint;
use proptest::prelude::*;

fn source(n: usize) -> impl Strategy<Value = DtmcSource> {
    prop::collection::vec(prop::collection::vec(0.02f64..1.0, n), n).prop_map(|raw| {
        let rows: Vec<Vec<f64>> = raw
            .into_iter()
            .map(|r| {
                let total: f64 = r.iter().sum();
                r.into_iter().map(|v| v / total).collect()
            })
            .collect();
        DtmcSource::new(&rows).unwrap()
    })
}

fn sized_source() -> impl Strategy<Value = DtmcSource> {
    (2usize..6).prop_flat_map(source)
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..2.0, 1..5)
}

/// A small dual-regime distribution built from a source's cycle chain.
fn drph() -> impl Strategy<Value = DrPh> {
    (sized_source(), 0.05f64..=1.0, 0usize..20).prop_map(|(src, sigma, tau)| {
        aoii_core::smdp::build_cycle_chain(&src, sigma, 0, tau)
            .unwrap()
            .phase_type()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn next_state_law_is_a_distribution(src in sized_source(), sigma in 0.05f64..=1.0, tau in 0usize..30, c in coeffs()) {
        let f = Penalty::polynomial(c).unwrap();
        for j in 0..src.n() {
            let s = eval_state(&src, sigma, j, tau, &f).unwrap();
            prop_assert!((s.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(s.p.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
            prop_assert!(s.c <= s.d);
            prop_assert!(s.d > 1.0 / (1.0 - src.prob(j, j)) - 1e-12);
        }
    }

    #[test]
    fn survival_is_monotone(d in drph()) {
        prop_assert!((d.survival(0) - d.mass()).abs() < 1e-12);
        let mut prev = d.survival(0);
        for t in 1..100 {
            let s = d.survival(t);
            prop_assert!(s <= prev + 1e-15);
            prop_assert!(d.pmf(t) >= -1e-15);
            prev = s;
        }
    }

    #[test]
    fn penalty_sum_is_linear(d in drph(), f in coeffs(), g in coeffs(), alpha in 0.0f64..3.0) {
        let len = f.len().max(g.len());
        let mixed: Vec<f64> = (0..len)
            .map(|k| alpha * f.get(k).copied().unwrap_or(0.0) + g.get(k).copied().unwrap_or(0.0))
            .collect();
        let ef = expected_penalty_sum(&d, &Penalty::polynomial(f).unwrap()).unwrap();
        let eg = expected_penalty_sum(&d, &Penalty::polynomial(g).unwrap()).unwrap();
        let em = expected_penalty_sum(&d, &Penalty::polynomial(mixed).unwrap()).unwrap();
        prop_assert!((em - (alpha * ef + eg)).abs() <= 1e-9 * em.abs().max(1.0));
    }

    #[test]
    fn penalty_sum_is_monotone_in_the_penalty(d in drph(), f in coeffs(), bump in 0.0f64..1.0) {
        let mut g = f.clone();
        g[0] += bump;
        let ef = expected_penalty_sum(&d, &Penalty::polynomial(f).unwrap()).unwrap();
        let eg = expected_penalty_sum(&d, &Penalty::polynomial(g).unwrap()).unwrap();
        prop_assert!(eg >= ef - 1e-12 * ef.abs().max(1.0));
    }

    #[test]
    fn policy_iteration_beats_every_probe(
        src in (2usize..4).prop_flat_map(source),
        sigma in 0.2f64..=1.0,
        lambda in 0.0f64..80.0,
        probes in prop::collection::vec(prop::collection::vec(0usize..=15, 3), 8),
    ) {
        let n = src.n();
        let pens = (0..n).map(|k| Penalty::polynomial(vec![0.5, 0.5 / (k + 1) as f64, 1.0]).unwrap()).collect();
        let model = SmdpModel::new(src, sigma, pens, 15).unwrap();
        let out = policy_iteration(&model, lambda, PolicyIterConfig::default()).unwrap();
        for probe in probes {
            let cost = model.average_cost(&probe[..n], lambda).unwrap();
            prop_assert!(out.eta <= cost + 1e-9 * cost.max(1.0));
        }
    }

    #[test]
    fn stirling_recurrence((n, m) in (3usize..40).prop_flat_map(|n| (Just(n), 2..n))) {
        let lhs = stirling2(n, m).unwrap();
        let rhs = BigUint::from(m) * stirling2(n - 1, m).unwrap() + stirling2(n - 1, m - 1).unwrap();
        prop_assert_eq!(lhs, rhs);
    }
}

#[test]
fn scalar_regime_switch_has_closed_form_mean() {
    // One phase: stay w.p. a1 for the first tau slots, then w.p. a2.
    let (a1, a2, tau) = (0.6f64, 0.3f64, 4usize);
    let d = DrPh::new(
        RowVector::from_element(1, 1.0),
        Matrix::from_element(1, 1, a1),
        Matrix::from_element(1, 1, a2),
        tau,
    )
    .unwrap();
    // E[T] = sum_{t>=0} P(T > t).
    let head = (1.0 - a1.powi(tau as i32)) / (1.0 - a1);
    let tail = a1.powi(tau as i32) / (1.0 - a2);
    let ones = expected_penalty_sum(&d, &Penalty::polynomial(vec![1.0]).unwrap()).unwrap();
    assert!(
        (ones - (head + tail)).abs() < 1e-12,
        "{ones} vs {}",
        head + tail
    );
}
