//! Closed-form values checked through the public API. The reference numbers
//! were worked out in exact rational arithmetic or from half-integer Bessel
//! forms and are frozen here.

use nnwalk::classtest::{evaluate_test, verdict_to_class, BoundaryFunction, Monotone, TestId};
use nnwalk::localtime::excursion_law;
use nnwalk::specfun::{bessel_i, bessel_k, exit_laplace, expected_exit_time, hitting_probability, s_nu, BesselOrder, Interval};
use nnwalk::walklaw::{d_tail, local_time_law, p_bessel, return_probability, truncated_chain_oracle, WalkLaw};
use nnwalk::{Error, Verdict};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn half_order_identities() {
    let half = BesselOrder::new(0.5).unwrap();
    let law = WalkLaw::bessel(0.5).unwrap();
    for r in [2u64, 3, 5, 17, 250, 10_000] {
        let rf = r as f64;
        assert!(close(p_bessel(0.5, r).unwrap(), 0.5 / rf, 1e-12));
        assert!(close(local_time_law(&law, r).unwrap().p_star, 0.5 / rf, 1e-10));
        assert!(close(excursion_law(0.5, r).unwrap().theta, 1.0, 1e-10));
        let band = Interval::new(rf - 1.0, rf, rf + 1.0).unwrap();
        assert!(close(expected_exit_time(half, band), 1.0, 1e-10));
    }
    let iv = Interval::new(1.0, 2.0, 3.0).unwrap();
    assert!(close(hitting_probability(half, iv), 0.25, 1e-12));
    assert!(close(exit_laplace(half, iv, 0.5).unwrap(), 1.0 / 1f64.cosh(), 1e-10));
    // S_{1/2}(u, v) = sinh(u - v) / (u v)
    assert!(close(s_nu(0.5, 2.0, 1.0).unwrap(), 1f64.sinh() / 2.0, 1e-10));
}

#[test]
fn half_integer_bessel_functions() {
    // I_{1/2}(x) = sqrt(2/(pi x)) sinh x, K_{1/2}(x) = sqrt(pi/(2x)) e^-x
    for x in [0.1, 1.0, 7.5, 30.0] {
        let c = (2.0 / (std::f64::consts::PI * x)).sqrt();
        assert!(close(bessel_i(0.5, x).unwrap(), c * x.sinh(), 1e-12));
        assert!(close(bessel_k(0.5, x).unwrap(), (-x).exp() / (c * x), 1e-12));
    }
}

#[test]
fn order_one_rational_values() {
    let law = WalkLaw::bessel(1.0).unwrap();
    assert!(close(p_bessel(1.0, 2).unwrap(), 11.0 / 32.0, 1e-14));
    assert!(close(d_tail(&law, 2, 1e-12).unwrap(), 9.0 / 5.0, 1e-10));
    assert!(close(local_time_law(&law, 2).unwrap().p_star, 15.0 / 32.0, 1e-12));
    let ex = excursion_law(1.0, 2).unwrap();
    assert!(close(ex.theta, 15.0 / 16.0, 1e-14));
    assert!(close(ex.theta / ex.p_star, 2.0, 1e-14));
}

#[test]
fn return_probability_telescopes() {
    let law = WalkLaw::bessel(0.5).unwrap();
    assert!(close(return_probability(&law, 40, 10).unwrap(), 0.25, 1e-10));
    assert_eq!(return_probability(&law, 10, 10).unwrap(), 1.0);
}

#[test]
fn tridiagonal_oracle_matches_product_formula() {
    for (nu, r) in [(0.5, 5u64), (1.0, 2), (0.25, 10), (2.0, 7)] {
        let law = WalkLaw::bessel(nu).unwrap();
        let exact = local_time_law(&law, r).unwrap().p_star;
        let chain = truncated_chain_oracle(&law, r, 10_000).unwrap().p_star;
        assert!((exact - chain).abs() < 1e-6, "nu={nu} R={r}: {exact} vs {chain}");
    }
}

#[test]
fn class_test_examples() {
    for (c, want) in [(1.5, Verdict::Diverges), (1.9, Verdict::Diverges), (2.1, Verdict::Converges), (3.0, Verdict::Converges)] {
        let f = BoundaryFunction::SqrtLogLog { c };
        for nu in [0.5, 1.0, 2.0] {
            assert_eq!(evaluate_test(TestId::BesselUpper, &f, nu).unwrap().verdict, want, "c={c} nu={nu}");
        }
    }
    for nu in [0.25, 0.5, 1.0, 2.0] {
        let crit = 1.0 / (2.0 * nu);
        for (beta, want) in [(crit - 0.2, Verdict::Diverges), (crit + 0.2, Verdict::Converges)] {
            if beta <= 0.0 {
                continue;
            }
            let v = evaluate_test(TestId::BesselLower, &BoundaryFunction::PowerLog { beta }, nu).unwrap();
            assert_eq!(v.verdict, want, "beta={beta} nu={nu}");
        }
    }
    let zero = BoundaryFunction::Expression { expr: "0".into(), monotone: Monotone::NonDecreasing };
    assert_eq!(evaluate_test(TestId::BesselLocalTimeUpper, &zero, 0.7).unwrap().verdict, Verdict::Converges);
    assert_eq!(verdict_to_class(TestId::BesselLower, Verdict::Converges).unwrap(), "t^{1/2}b(t) ∈ LLC(Y_ν)");
    assert_eq!(verdict_to_class(TestId::WalkUpper, Verdict::Diverges).unwrap(), "n^{1/2}a(n) ∉ UUC(X_n)");
    assert!(matches!(verdict_to_class(TestId::WalkUpper, Verdict::Inconclusive), Err(Error::Inconclusive)));
}
