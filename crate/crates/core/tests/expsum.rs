use gausskern::expsum::*;
use proptest::prelude::*;

fn sum(beta: f64, h: f64, tail: f64) -> ExpSum {
    build_exp_sum(&ExpSumParams::new(beta, h, 1e-3, 1e3, tail), Form::ExponentialInR).unwrap()
}

#[test]
fn sup_errors_on_the_stated_interval() {
    for beta in [0.5, 1.0] {
        assert!(sum(beta, 0.5, 1e-12).sup_rel_error(1e-3, 1e3, 1000) <= 1e-7);
        assert!(sum(beta, 0.25, 1e-16).sup_rel_error(1e-3, 1e3, 1000) <= 1e-13);
    }
}

#[test]
fn inverse_square_root_at_one() {
    let s = sum(0.5, 0.5, 1e-12);
    assert!((s.eval(1.0) - 1.0).abs() <= 1e-7);
}

#[test]
fn bound_values() {
    let e = error_bound(0.5, 0.5).unwrap();
    assert!((e / 7.567e-9 - 1.0).abs() < 1e-3, "{e}");
    let lead = 2.0 * 2f64.sqrt() * (-2.0 * std::f64::consts::PI.powi(2)).exp();
    assert!((e / lead - 1.0).abs() < 1e-6);
    assert!(error_bound(1.0, 0.5).unwrap() < 1e-7);
    let tiny = error_bound(1.0, 0.125).unwrap();
    assert!(tiny > 0.0 && tiny < 1e-32);
}

#[test]
fn leading_terms_match_at_small_steps() {
    for beta in [0.5, 1.0] {
        for h in [0.5, 0.25, 0.125] {
            let (e, l) = (error_bound(beta, h).unwrap(), error_bound_leading(beta, h).unwrap());
            assert!((e / l - 1.0).abs() <= 1e-6, "beta {beta} h {h}: {e} vs {l}");
        }
    }
}

#[test]
fn phi_examples() {
    let r = validate_phi(1.0, 0.5, &[0.0, 0.125, 0.25], 1e-12).unwrap();
    assert!(r.ok && r.points.iter().all(|p| p.deviation <= 1e-7));
    let r = validate_phi(0.5, 0.25, &[0.0], 1e-16).unwrap();
    assert!(r.points[0].deviation <= 1e-13);
    let r = validate_phi(1.0, 0.5, &[0.0, 0.5], 1e-18).unwrap();
    let gap = (r.points[0].phi - r.points[1].phi).abs();
    assert!(gap <= 10.0 * f64::EPSILON, "gap {gap:e} {:?}", r.points);
    assert!(validate_phi(1.0, 0.5, &[0.7], 1e-12).is_err());
}

#[test]
fn term_structure() {
    let s = sum(1.0, 0.5, 1e-10);
    assert_eq!(s.len() as i64, s.k_hi - s.k_lo + 1);
    assert!(s.terms.iter().all(|t| t.weight > 0.0 && t.exponent > 0.0));
    assert!(s.terms.windows(2).all(|w| w[1].exponent > w[0].exponent));
    assert!(build_exp_sum(&ExpSumParams::new(0.75, 0.5, 1e-3, 1e3, 1e-10), Form::ExponentialInR).is_err());
}

proptest! {
    #[test]
    fn error_is_periodic_in_log_r(x in -5.0f64..5.0, beta in prop::sample::select(vec![0.5, 1.0])) {
        let h = 0.5;
        let s = build_exp_sum(&ExpSumParams::new(beta, h, 1e-4, 1e4, 1e-14), Form::ExponentialInR).unwrap();
        let r = x.exp();
        let a = s.rel_error(r);
        let b = s.rel_error(r * h.exp());
        prop_assert!((a - b).abs() <= 4.0 * s.tail_tol + 1e-14);
    }

    #[test]
    fn bound_grows_with_h(h1 in 0.05f64..1.0, dh in 0.01f64..0.5, beta in prop::sample::select(vec![0.5, 1.0])) {
        prop_assert!(error_bound(beta, h1).unwrap() < error_bound(beta, h1 + dh).unwrap());
    }

    #[test]
    fn approximation_is_positive_and_within_bound(x in -6.9f64..6.9, beta in prop::sample::select(vec![0.5, 1.0])) {
        let s = sum(beta, 0.5, 1e-12);
        let r = x.exp();
        prop_assert!(s.eval(r) > 0.0);
        prop_assert!(s.rel_error(r) <= s.bound.max(10.0 * f64::EPSILON));
    }
}
