use proptest::prelude::*;

use nnwalk::classtest::{evaluate_test, evaluate_test_with, parse_expression, Arg, BoundaryFunction, TestId, TestOptions};
use nnwalk::couple::{simulate_coupling, Coupling};
use nnwalk::localtime::excursion_law;
use nnwalk::rng::Stream;
use nnwalk::specfun::{exit_laplace, expected_exit_time, hitting_probability, s_nu, BesselOrder, Interval};
use nnwalk::walklaw::{bessel_scaled_ab, return_probability, Perturbation, WalkLaw};
use nnwalk::walksim::{simulate_walk, StopRule};
use nnwalk::Verdict;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eta_mean_is_level_over_order(nu in 0.05f64..4.0, r in 2u64..5000) {
        let l = excursion_law(nu, r).unwrap();
        let want = r as f64 / nu;
        prop_assert!((l.eta_mean() - want).abs() <= 1e-8 * want);
    }

    #[test]
    fn u_ratio_identity(nu in 0.05f64..4.0, r in 2u64..100_000) {
        let law = WalkLaw::bessel(nu).unwrap();
        let (a, b) = bessel_scaled_ab(nu, r);
        let u = law.u_ratio(r).unwrap();
        prop_assert!((u * a - b).abs() <= 1e-10 * b);
    }

    #[test]
    fn return_probability_is_power(nu in 0.1f64..3.0, r in 1u64..200, gap in 1u64..500) {
        let law = WalkLaw::bessel(nu).unwrap();
        let m = r + gap;
        let p = return_probability(&law, m, r).unwrap();
        let want = (r as f64 / m as f64).powf(2.0 * nu);
        prop_assert!((p - want).abs() <= 1e-10 * want.max(1e-300));
        prop_assert!(return_probability(&law, m + 1, r).unwrap() <= p);
    }

    #[test]
    fn s_nu_antisymmetric(nu in 0.1f64..5.0, u in 0.1f64..40.0, v in 0.1f64..40.0) {
        let a = s_nu(nu, u, v).unwrap();
        let b = s_nu(nu, v, u).unwrap();
        prop_assert!((a + b).abs() <= 1e-9 * a.abs().max(1e-300));
        if u > v {
            prop_assert!(a > 0.0);
        }
    }

    #[test]
    fn exit_time_is_laplace_slope(nu in 0.1f64..3.0, a in 0.5f64..5.0, w1 in 0.2f64..3.0, w2 in 0.2f64..3.0) {
        let o = BesselOrder::new(nu).unwrap();
        let iv = Interval::new(a, a + w1, a + w1 + w2).unwrap();
        let h = 1e-5;
        let slope = (exit_laplace(o, iv, h).unwrap() - exit_laplace(o, iv, 3.0 * h).unwrap()) / (2.0 * h);
        let m = expected_exit_time(o, iv);
        // central difference at alpha = 2h; the bias is O(h E tau^2)
        prop_assert!((slope - m).abs() <= 1e-3 * m.max(1e-3));
        let p = hitting_probability(o, iv);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn walk_paths_alternate_parity(seed in 0u64..1000, n in 1u64..400) {
        let law = WalkLaw::bessel(0.75).unwrap();
        let path = simulate_walk(&law, StopRule::Steps { n }, seed, 0, 10_000).unwrap();
        for (k, w) in path.positions.windows(2).enumerate() {
            prop_assert_eq!(w[0].abs_diff(w[1]), 1);
            prop_assert_eq!(w[1] % 2, ((k + 1) % 2) as u64);
        }
    }

    #[test]
    fn coupled_walks_share_parity(seed in 0u64..500, gamma in 1.2f64..2.0) {
        let l1 = WalkLaw::power(2.0, gamma, 1.0, Perturbation::Plus).unwrap();
        let l2 = WalkLaw::power(2.0, gamma, 0.0, Perturbation::Zero).unwrap();
        let mut cp = Coupling::new(&l1, &l2).unwrap();
        let mut rng = Stream::new(seed, 3);
        let tr = simulate_coupling(&mut cp, 2000, &mut rng).unwrap();
        for (j, k) in tr.j.iter().zip(&tr.k) {
            prop_assert_eq!(j % 2, k % 2);
        }
    }

    #[test]
    fn expressions_match_f64(t in 20f64..1e12, c in 0.1f64..5.0) {
        let e = parse_expression(&format!("sqrt({c}*loglog(t)) + log(t)^(-0.5) - 1/t")).unwrap();
        let got = e.eval(Arg { ll: t.ln().ln() }).unwrap().value();
        let want = (c * t.ln().ln()).sqrt() + t.ln().powf(-0.5) - 1.0 / t;
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
    }
}

fn matched_grid() -> Vec<(TestId, BoundaryFunction, f64)> {
    use BoundaryFunction::*;
    let mut out = Vec::new();
    for nu in [0.25, 0.5, 1.0, 2.0] {
        for c in [1.0, 1.8, 2.2, 3.0] {
            for t in [TestId::BesselUpper, TestId::BesselFutureInfUpper, TestId::BesselGapUpper] {
                out.push((t, SqrtLogLog { c }, nu));
            }
            out.push((TestId::BesselEscapeLower, InverseLogLog { c }, nu));
        }
        for beta in [0.5, 0.9, 1.1, 2.0, 3.0] {
            out.push((TestId::BesselLower, PowerLog { beta: beta / (2.0 * nu) }, nu));
            out.push((TestId::BesselRangeLower, InverseLogPow { beta: beta.max(1.0) + 0.2 * (beta - 1.0).max(0.0) }, nu));
            out.push((TestId::BesselLocalTimeUpper, LogLog { c: beta / nu }, nu));
        }
    }
    out
}

#[test]
fn discrete_and_continuous_tests_agree() {
    for (t, f, nu) in matched_grid() {
        let b = 2.0 * nu + 1.0;
        let d = t.counterpart();
        let p = if d.takes_drift() { b } else { nu };
        let cont = evaluate_test(t, &f, nu).unwrap();
        let disc = evaluate_test(d, &f, p).unwrap();
        assert_eq!(cont.verdict, disc.verdict, "{t} vs {d} with {f:?}, nu={nu}");
    }
}

#[test]
fn verdicts_ignore_tail_start() {
    let late = TestOptions { x0: 1000.0, ..Default::default() };
    for (t, f, nu) in matched_grid() {
        for test in [t, t.counterpart()] {
            let p = if test.takes_drift() { 2.0 * nu + 1.0 } else { nu };
            let a = evaluate_test(test, &f, p).unwrap().verdict;
            let b = evaluate_test_with(test, &f, p, &late).unwrap().verdict;
            if a != Verdict::Inconclusive && b != Verdict::Inconclusive {
                assert_eq!(a, b, "{test} {f:?} nu={nu}");
            }
        }
    }
}
