//! Randomized invariants.

use proptest::prelude::*;
use wellposed::solver::{budget_integrand, value_function};
use wellposed::*;

fn power_lognormal() -> (Utility, PricingKernel) {
    (Utility::power(0.5).unwrap(), PricingKernel::lognormal(0.0, 1.0).unwrap())
}

fn matched() -> (Utility, PricingKernel) {
    let k = PricingKernel::lognormal(0.0, 1.0).unwrap();
    (Utility::series(SeriesCoefficients::KernelMatched { kernel: k.clone() }).unwrap(), k)
}

fn factorial() -> (Utility, PricingKernel) {
    let u = Utility::series(SeriesCoefficients::ShiftedFactorial { shift: 2 }).unwrap();
    (u, PricingKernel::inverse_exponential())
}

fn utility_strategy() -> impl Strategy<Value = Utility> {
    prop_oneof![
        Just(Utility::sqrt()),
        (0.05f64..0.95).prop_map(|a| Utility::power(a).unwrap()),
        Just(Utility::piecewise_sqrt_log()),
        Just(factorial().0),
        Just(matched().0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn inverse_marginal_roundtrip(u in utility_strategy(), ln_x in -12.0f64..12.0) {
        let x = ln_x.exp();
        let y = u.marginal(x).unwrap().0;
        let back = u.inverse_marginal(y).unwrap();
        prop_assert!((back - x).abs() <= 1e-8 * (1.0 + x), "x = {x}, back = {back}");
    }

    #[test]
    fn marginal_is_decreasing(u in utility_strategy(), ln_x in -10.0f64..10.0, step in 0.01f64..2.0) {
        let x = ln_x.exp();
        let (m1, d1) = u.marginal(x).unwrap();
        let (m2, _) = u.marginal(x * (1.0 + step)).unwrap();
        prop_assert!(m1 > 0.0 && m2 < m1);
        prop_assert!(d1 < 0.0);
    }

    #[test]
    fn f_is_nonincreasing(which in 0usize..3, l1 in 1.0f64..8.0, ratio in 1.0f64..4.0) {
        let (u, k) = [power_lognormal(), matched(), factorial()][which].clone();
        let n = Numerics::default();
        let (a, b) = (f_eval(&u, &k, l1, &n), f_eval(&u, &k, l1 * ratio, &n));
        let (a, b) = (a.value().unwrap(), b.value().unwrap());
        prop_assert!(b <= a * (1.0 + 1e-9), "f({l1}) = {a} < f({}) = {b}", l1 * ratio);
    }

    #[test]
    fn lognormal_moments_match_quadrature(alpha in 0.25f64..4.0, mu in -1.0f64..1.0, sigma in 0.2f64..1.5) {
        let k = PricingKernel::lognormal(mu, sigma).unwrap();
        let n = Numerics::default();
        let closed = k.negative_moment(alpha, &n).value().unwrap();
        let quad = k.negative_moment_quadrature(alpha, &n).value().unwrap();
        prop_assert!((closed - quad).abs() <= 1e-7 * closed, "{closed} vs {quad}");
    }

    #[test]
    fn kernel_draws_are_positive(seed in any::<u64>()) {
        for k in [PricingKernel::heavy_log(), PricingKernel::inverse_exponential(), PricingKernel::exponential(2.0).unwrap()] {
            prop_assert!(k.sample(200, seed).iter().all(|x| *x > 0.0 && x.is_finite()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn solution_meets_budget_and_kkt(ln_a in -2.5f64..2.5, seed in any::<u64>()) {
        let a = ln_a.exp();
        let (u, k) = power_lognormal();
        let n = Numerics::default();
        let s = optimal_solution(&u, &k, a, &n).unwrap();
        let check = s.budget_check.value().unwrap();
        prop_assert!((check - a).abs() <= n.budget_tol * a);
        for x in k.sample(1000, seed) {
            let m = u.marginal(s.wealth(x)).unwrap().0;
            prop_assert!((m - s.lambda * x).abs() <= 1e-8 * s.lambda * x);
        }
    }

    #[test]
    fn value_scales_sublinearly(a in 0.02f64..0.3, k_mult in 1.0f64..2.0) {
        let (u, k) = matched();
        let n = Numerics::default();
        let b = a * k_mult;
        let (va, vb) = match (value_function(&u, &k, a, &n), value_function(&u, &k, b, &n)) {
            (ValueOutcome::Attained { value: va, .. }, ValueOutcome::Attained { value: vb, .. }) => {
                (va.value().unwrap(), vb.value().unwrap())
            }
            other => return Err(TestCaseError::fail(format!("{other:?}"))),
        };
        prop_assert!(va <= vb + 1e-9, "V not increasing: {va} > {vb}");
        prop_assert!(vb <= b / a * va + 1e-6, "{vb} > {} ", b / a * va);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature(lambda in 0.5f64..4.0, seed in any::<u64>()) {
        let (u, k) = power_lognormal();
        let n = Numerics::default();
        let exact = f_eval(&u, &k, lambda, &n).value().unwrap();
        let (mean, se) = mc_expect(&k, &budget_integrand(&u, lambda), 100_000, seed);
        // 6 standard errors keeps the false-failure rate negligible
        prop_assert!((mean - exact).abs() <= 6.0 * se, "{mean} ± {se} vs {exact}");
    }

    #[test]
    fn discrete_solution_beats_feasible_alternatives(
        w in prop::collection::vec(0.01f64..1.0, 5),
        a in 0.1f64..5.0,
    ) {
        let atoms = vec![0.5, 0.8, 1.0, 1.5, 2.5];
        let probs = vec![0.1, 0.2, 0.3, 0.25, 0.15];
        let k = PricingKernel::discrete(atoms.clone(), probs.clone()).unwrap();
        let u = Utility::sqrt();
        let s = optimal_solution(&u, &k, a, &Numerics::default()).unwrap();
        let eu = |xs: &[f64]| -> f64 { xs.iter().zip(&probs).map(|(x, p)| p * x.sqrt()).sum() };
        let star: Vec<f64> = atoms.iter().map(|&x| s.wealth(x)).collect();
        let cost: f64 = w.iter().zip(&atoms).zip(&probs).map(|((w, x), p)| w * x * p).sum();
        let y: Vec<f64> = w.iter().map(|w| w * a / cost).collect();
        prop_assert!(eu(&star) >= eu(&y) - 1e-9);
    }
}

#[test]
fn inverse_exponential_moments_are_factorials() {
    let k = PricingKernel::inverse_exponential();
    let n = Numerics::default();
    let mut fact = 1.0;
    for m in 1..=8 {
        fact *= m as f64;
        let v = k.negative_moment_quadrature(m as f64, &n).value().unwrap();
        assert!((v - fact).abs() <= 1e-9 * fact, "{m}: {v}");
    }
}

#[test]
fn seed_does_not_change_verdicts() {
    let a = selftest::selftest(&Numerics { seed: 1, ..Numerics::default() });
    let b = selftest::selftest(&Numerics { seed: 987_654_321, ..Numerics::default() });
    assert!(a.passed && b.passed);
    let va: Vec<bool> = a.scenarios.iter().map(|s| s.passed).collect();
    let vb: Vec<bool> = b.scenarios.iter().map(|s| s.passed).collect();
    assert_eq!(va, vb);
}

#[test]
fn low_divergence_cap_fails_selftest() {
    let r = selftest::selftest(&Numerics { divergence_cap: 10.0, ..Numerics::default() });
    assert!(!r.passed);
}
