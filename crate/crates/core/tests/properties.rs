use discourage_core::bounds::{build_m_triangle, verify_bound};
use discourage_core::embedded::{
    closed_form, embedded_recursion, first_difference, normalization_check, parity_check,
};
use discourage_core::model::{format_rational, parse_rational};
use discourage_core::oracle::{
    simulate_paths, stationary_distribution, transient_uniformization, SimConfig, SimMode,
    TruncatedGenerator,
};
use discourage_core::series::{build_l_triangle, check_dual_recursion, s_coefficients, zero_boundary_s};
use discourage_core::{BirthDeathRates, Execution, LTriangle, ModelParams, TriangleKind};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use proptest::prelude::*;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn arb_params() -> impl Strategy<Value = ModelParams> {
    (1i64..12, 1i64..6, 1i64..12, 1i64..6)
        .prop_map(|(a, b, c, d)| ModelParams::new(ratio(a, b), ratio(c, d)).unwrap())
}

fn arb_rates(states: usize) -> impl Strategy<Value = BirthDeathRates> {
    let rate = (1i64..30, 1i64..9).prop_map(|(n, d)| ratio(n, d));
    (
        prop::collection::vec(rate.clone(), states),
        prop::collection::vec(rate, states - 1),
    )
        .prop_map(|(birth, mut death)| {
            death.insert(0, ratio(0, 1));
            BirthDeathRates::from_table(birth, death).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l_triangle_nonnegative_and_bounded(p in arb_params()) {
        let l = build_l_triangle(&p, 16);
        prop_assert!(l.rows().iter().flatten().all(|v| !v.is_negative()));
        prop_assert!((0..=16).all(|i| l.entry(i, i as i64).is_one()));
        let r = verify_bound(&l, &build_m_triangle(16), &p).unwrap();
        prop_assert!(r.passed(), "{:?}", r.first_violation);
    }

    #[test]
    fn zero_boundary_and_dual_forms_agree(p in arb_params()) {
        let l = build_l_triangle(&p, 12);
        prop_assert!(check_dual_recursion(&l, &p, 12).unwrap().passed());
        let zb = zero_boundary_s(&p, 12);
        for k in 0..=6 {
            let s = s_coefficients(&l, &p, k).unwrap();
            for i in 0..=12 - k {
                prop_assert_eq!(zb.get(i, k).unwrap(), &s.terms[i]);
            }
        }
    }

    #[test]
    fn s_signs_alternate(p in arb_params(), k in 0usize..8) {
        let l = build_l_triangle(&p, 14);
        let s = s_coefficients(&l, &p, k).unwrap();
        prop_assert_eq!(&s.terms[k], &num_traits::pow(p.alpha_sq().clone(), k));
        for i in k..=14 {
            let v = &s.terms[i];
            prop_assert!(v.is_positive() == ((i - k) % 2 == 0));
        }
    }

    #[test]
    fn embedded_closed_form_matches_recursion(rates in arb_rates(14)) {
        let rec = embedded_recursion(&rates, 13).unwrap();
        let (tables, cf) = closed_form(&rates, 13).unwrap();
        prop_assert_eq!(first_difference(&rec, &cf), None);
        prop_assert!(normalization_check(&rec));
        prop_assert!(parity_check(&rec));
        prop_assert!(tables.d.windows(2).all(|w| w[1] <= w[0] && w[1].is_positive()));
        for n in 0..=13 {
            prop_assert_eq!(rec.p(n, n), tables.d[n].clone());
        }
    }

    #[test]
    fn rational_text_roundtrip(n in -10_000i64..10_000, d in 1i64..5_000) {
        let q = ratio(n, d);
        prop_assert_eq!(parse_rational(&format_rational(&q)).unwrap(), q);
    }

    #[test]
    fn triangle_cache_roundtrip(p in arb_params(), depth in 0usize..10) {
        let l = build_l_triangle(&p, depth);
        let back = LTriangle::from_cache_json(&l.to_cache_json(), TriangleKind::L).unwrap();
        prop_assert_eq!(back, l);
    }

    #[test]
    fn uniformization_is_a_distribution(p in arb_params(), t in 0.0f64..4.0) {
        let u = transient_uniformization(&TruncatedGenerator::discouragement(&p, 40), t, 1e-10)
            .unwrap();
        prop_assert!(u.probabilities.iter().all(|&x| x >= -1e-15));
        prop_assert!((u.probabilities.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn stationary_detailed_balance(p in arb_params()) {
        let pi = stationary_distribution(&p, 80).unwrap();
        let rho = p.lambda_f64() / p.mu_f64();
        for k in 0..6 {
            let expected = rho / ((k + 1) as f64).powi(2);
            prop_assert!((pi[k + 1] / pi[k] - expected).abs() <= 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn simulation_independent_of_execution(seed in any::<u64>(), steps in 0usize..8) {
        let p = ModelParams::parse("1", "1").unwrap();
        let cfg = SimConfig { seed, paths: 300 };
        for mode in [SimMode::Embedded { steps }, SimMode::Continuous { t_end: 0.7 }] {
            let a = simulate_paths(&p, cfg, mode, Execution::Sequential).unwrap();
            let b = simulate_paths(&p, cfg, mode, Execution::Parallel).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
