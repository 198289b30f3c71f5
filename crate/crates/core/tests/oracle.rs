use gausskern::gaussalg::{l2_inner, GaussianExpansion};
use gausskern::oracle::checks::{hardy_check, inverse_power_integral, k_functional_check};
use gausskern::oracle::fourier::{fractional_seminorm_sq, FourierQuadOptions};
use gausskern::oracle::quad::{integrate3, quad_l2_inner, radial_integral};
use gausskern::oracle::*;
use gausskern::random::TermGenerator;
use gausskern::GaussHermiteTerm;
use proptest::prelude::*;
use std::f64::consts::PI;

fn gauss(center: [f64; 3], p: f64) -> GaussianExpansion {
    GaussianExpansion::single(1, GaussHermiteTerm::isotropic(1.0, &center, p)).unwrap()
}

/// Dawson's integral by composite Simpson.
fn dawson(a: f64) -> f64 {
    let n = 4000;
    let h = a / n as f64;
    let s: f64 = (0..=n)
        .map(|i| {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * (t * t - a * a).exp()
        })
        .sum();
    s * h / 3.0
}

#[test]
fn quad3d_gaussian_integrals() {
    let grid = QuadratureGrid::new(8.0, 40, Rule::GaussLegendre).unwrap();
    let q = quad3d(&|x: &[f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), &grid).unwrap();
    assert!((q.value - PI.powf(1.5)).abs() < 1e-12 * PI.powf(1.5));
    assert!(q.rel_change < 1e-9, "{:?}", q);
    let shifted = quad3d(&|x: &[f64; 3]| x[0] * x[0] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), &grid).unwrap();
    assert!((shifted.value - 0.5 * PI.powf(1.5)).abs() < 1e-12);
    let mid = integrate3(&|_: &[f64; 3]| 1.0, &QuadratureGrid::new(1.0, 8, Rule::Midpoint).unwrap()).unwrap();
    assert!((mid - 8.0).abs() < 1e-13);
    assert!(QuadratureGrid::new(1.0, 4, Rule::Midpoint).is_err());
}

#[test]
fn radial_rule_is_exact_on_powers() {
    let v = radial_integral(|r| r * r, 2.0, 1.0, 8);
    assert!((v - 8.0 / 3.0).abs() < 1e-13);
    let w = radial_integral(|r| r.sqrt(), 1.0, 2.0, 16);
    assert!((w - 2.0 / 3.0).abs() < 1e-13);
}

#[test]
fn hardy_values() {
    let c = hardy_check(&gauss([0.0; 3], 1.0)).unwrap();
    assert!((c.lhs - 2.0 * PI.powf(1.5)).abs() < 1e-10 * c.lhs);
    assert!((c.rhs - 6.0 * PI.powf(1.5)).abs() < 1e-12 * c.rhs);
    assert!((c.ratio - 1.0 / 3.0).abs() < 1e-10);
    // int exp(-2|x - a|^2) / |x|^2 dx = pi^2 erfi(b) e^{-b^2} / (sqrt2 b) with b = sqrt2 |a|
    let a = 0.8;
    let b = 2f64.sqrt() * a;
    let exact = 2.0 * PI.powf(1.5) * dawson(b) / (2f64.sqrt() * b);
    let v = inverse_power_integral(&gauss([a, 0.0, 0.0], 2.0), 1.0).unwrap();
    assert!((v - exact).abs() < 1e-8 * exact, "{v} vs {exact}");
}

#[test]
fn radial_inverse_powers() {
    // int |x|^{-2t} exp(-p |x|^2) dx = 2 pi Gamma(3/2 - t) p^{t - 3/2} for e^2 = exp(-2 |x|^2 / 2)
    let v = inverse_power_integral(&gauss([0.0; 3], 1.0), 0.5).unwrap();
    assert!((v - 2.0 * PI).abs() < 1e-12 * 2.0 * PI);
}

#[test]
fn integer_seminorms_in_fourier_space() {
    let e = TermGenerator::new(4).expansion3(2);
    let o = FourierQuadOptions::default();
    let s1 = e.h1_semi_inner(&e).unwrap();
    assert!((fractional_seminorm_sq(&e, 1.0, &o).unwrap() - s1).abs() < 1e-8 * s1);
}

#[test]
fn k_functional_on_a_gaussian() {
    let o = FourierQuadOptions::default();
    for (t1, t2, s) in [(0.0, 2.0, 0.5), (0.0, 1.0, 0.5), (1.0, 2.0, 0.25)] {
        let r = k_functional_check(&gauss([0.1, 0.0, 0.0], 1.5), (1e-6, 1e6), 221, t1, t2, s, &o).unwrap();
        assert!(r.rel_error < 1e-4, "{t1} {t2} {s}: {}", r.rel_error);
        assert!((r.vartheta - (t1 + s * (t2 - t1))).abs() < 1e-15);
    }
}

#[test]
fn smoke_suites_pass() {
    for suite in [Suite::Expsum, Suite::Algebra, Suite::Lemmas, Suite::Kfunctional] {
        let rep = validate(suite, 3, &SuiteSize::smoke()).unwrap();
        for c in &rep.checks {
            assert!(c.pass, "{suite}: {} worst {} tol {}", c.name, c.worst, c.tolerance);
        }
        assert!(rep.pass && !rep.checks.is_empty());
    }
}

#[test]
fn reports_are_deterministic() {
    let size = SuiteSize::smoke();
    let a = serde_json::to_string(&validate(Suite::Algebra, 7, &size).unwrap()).unwrap();
    let b = serde_json::to_string(&validate(Suite::Algebra, 7, &size).unwrap()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn l2_inner_matches_quadrature(seed in any::<u64>()) {
        let mut g = TermGenerator::new(seed);
        let (s, t) = (g.term3(), g.term3());
        let q = quad_l2_inner(&s, &t, 32).unwrap();
        let a = l2_inner(&s, &t).unwrap();
        let scale = l2_inner(&s, &s).unwrap().sqrt() * l2_inner(&t, &t).unwrap().sqrt();
        prop_assert!((a - q.value).abs() <= 1e-8 * scale, "{} vs {}", a, q.value);
    }

    #[test]
    fn hardy_never_fails(seed in any::<u64>()) {
        let c = hardy_check(&TermGenerator::new(seed).expansion3(2)).unwrap();
        prop_assert!(c.holds, "{:?}", c);
    }
}
