use gausskern::gaussalg::io::{from_json_lines, to_json_lines};
use gausskern::gaussalg::*;
use gausskern::random::TermGenerator;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use std::f64::consts::PI;

fn unit(center: [f64; 3], p: f64) -> GaussHermiteTerm {
    GaussHermiteTerm::isotropic(1.0, &center, p)
}

fn factor3(center: [f64; 3], p: f64) -> GaussFactor {
    GaussFactor::new(1.0, DVector::from_column_slice(&center), Precision::dense(DMatrix::identity(3, 3) * p))
}

#[test]
fn product_examples() {
    let t = product(&unit([0.0; 3], 1.0), &factor3([1.0, 0.0, 0.0], 1.0)).unwrap();
    assert!((t.coeff - (-0.25f64).exp()).abs() < 1e-15);
    assert!((t.center[0] - 0.5).abs() < 1e-15 && t.center[1] == 0.0);
    assert!((t.precision.entry(0, 0) - 2.0).abs() < 1e-15);
    let s = product(&unit([0.0; 3], 1.0), &factor3([0.0; 3], 1.0)).unwrap();
    assert!((s.coeff - 1.0).abs() < 1e-15 && s.center.iter().all(|&c| c == 0.0));
}

#[test]
fn fourier_examples() {
    let f = fourier(&unit([0.0; 3], 1.0)).unwrap();
    assert!((f.scale - 1.0).abs() < 1e-15);
    let w: [f64; 3] = [0.3, -0.4, 1.1];
    let g: f64 = (-0.5 * (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])).exp();
    assert!((f.eval(&w).re - g).abs() < 1e-15);

    let f4 = fourier(&unit([0.0; 3], 4.0)).unwrap();
    assert!((f4.scale - 0.125).abs() < 1e-15);
    assert!((f4.sigma.entry(1, 1) - 0.25).abs() < 1e-15);

    let x1 = unit([0.0; 3], 1.0).with_poly(Poly::coordinate(3, 0));
    let v = fourier(&x1).unwrap().eval(&w);
    assert!(v.re.abs() < 1e-15 && (v.im + w[0] * g).abs() < 1e-15);
}

#[test]
fn multiplier_examples() {
    let t = apply_gaussian_multiplier(&unit([0.0; 3], 1.0), 1.0).unwrap();
    assert!((t.coeff - 2f64.powf(-1.5)).abs() < 1e-15);
    assert!((t.precision.entry(2, 2) - 0.5).abs() < 1e-15);
    let r = TermGenerator::new(5).term3();
    assert_eq!(apply_gaussian_multiplier(&r, 0.0).unwrap(), r);
    assert!(apply_gaussian_multiplier(&r, -1.0).is_err());
}

#[test]
fn inner_product_and_norm_examples() {
    let g = GaussianExpansion::single(1, unit([0.0; 3], 1.0)).unwrap();
    assert!((g.sobolev_inner(&g, 0).unwrap() - PI.powf(1.5)).abs() < 1e-13);
    assert!((g.h1_semi_inner(&g).unwrap() - 1.5 * PI.powf(1.5)).abs() < 1e-13);
    assert!(g.sobolev_inner(&g, 3).is_err());
    assert!((g.evaluate(&[0.0; 3]) - 1.0).abs() < 1e-15);
    assert!((g.evaluate(&[1.0, 1.0, 0.0]) - (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn prune_examples() {
    let g = unit([0.0; 3], 1.0);
    let e = GaussianExpansion::from_terms(1, 4, vec![g.clone(), g.scaled(1e-9)]).unwrap();
    assert_eq!(e.prune(0.0).unwrap(), e);
    let kept = e.prune(1e-6).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept.terms[0].coeff, 1.0);
    let total: f64 = e.term_norms().unwrap().iter().sum();
    assert!(e.prune(total).unwrap().is_empty());
}

#[test]
fn degree_cap_is_enforced() {
    let t = unit([0.0; 3], 1.0).with_poly(Poly::from_terms(3, [(vec![2, 1, 0], 1.0)]));
    let mut e = GaussianExpansion::new(1, 5);
    assert!(e.push(laplacian(&t)).is_ok());
    let mut tight = GaussianExpansion::new(1, 3);
    assert!(matches!(tight.push(times_square_norm(&t)), Err(gausskern::Error::DegreeOverflow { .. })));
}

fn point(seed: u64, d: usize, i: usize) -> Vec<f64> {
    let mut g = TermGenerator::new(seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
    (0..d).map(|_| g.uniform(-2.5, 2.5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn product_is_pointwise(seed in any::<u64>()) {
        let mut g = TermGenerator::new(seed);
        let t = g.term3();
        let f = GaussFactor::new(g.uniform(0.2, 2.0), g.center(3), Precision::dense(g.spd(3)));
        let p = product(&t, &f).unwrap();
        for i in 0..10 {
            let x = point(seed, 3, i);
            let (a, b) = (p.eval(&x), t.eval(&x) * f.eval(&x));
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn pair_product_in_six_dimensions(seed in any::<u64>()) {
        let mut g = TermGenerator::new(seed);
        let t = g.structured_gaussian(2);
        let e = g.uniform(0.1, 3.0);
        let q = DMatrix::from_row_slice(2, 2, &[e, -e, -e, e]);
        let f = GaussFactor::new(1.0, DVector::zeros(6), Precision::structured(q));
        let p = product(&t, &f).unwrap();
        prop_assert!(p.precision.is_structured());
        for i in 0..10 {
            let x = point(seed, 6, i);
            let (a, b) = (p.eval(&x), t.eval(&x) * f.eval(&x));
            prop_assert!((a - b).abs() <= 1e-12 * b.abs() + 1e-300);
        }
    }

    #[test]
    fn multiplier_semigroup_and_degree(seed in any::<u64>(), a1 in 0.01f64..3.0, a2 in 0.01f64..3.0) {
        let t = TermGenerator::new(seed).term3();
        let two = apply_gaussian_multiplier(&apply_gaussian_multiplier(&t, a1).unwrap(), a2).unwrap();
        let one = apply_gaussian_multiplier(&t, a1 + a2).unwrap();
        prop_assert_eq!(one.degree(), t.degree());
        for i in 0..5 {
            let x = point(seed, 3, i);
            let (u, v) = (one.eval(&x), two.eval(&x));
            prop_assert!((u - v).abs() <= 1e-12 * (u.abs() + one.coeff.abs()));
        }
        let d = one.precision.to_dense() - two.precision.to_dense();
        prop_assert!(d.amax() <= 1e-12 * one.precision.to_dense().amax());
    }

    #[test]
    fn multiplier_keeps_structure(seed in any::<u64>(), a in 0.01f64..3.0) {
        let t = TermGenerator::new(seed).structured_gaussian(2);
        prop_assert!(apply_gaussian_multiplier(&t, a).unwrap().precision.is_structured());
    }

    #[test]
    fn fourier_round_trip(seed in any::<u64>()) {
        let t = TermGenerator::new(seed).term3();
        let (back, im) = inverse_fourier(&fourier(&t).unwrap()).unwrap();
        prop_assert!(im <= 1e-12);
        prop_assert!((back.coeff - t.coeff).abs() <= 1e-12 * t.coeff.abs());
        prop_assert!((&back.center - &t.center).amax() <= 1e-12);
        let dq = back.precision.to_dense() - t.precision.to_dense();
        prop_assert!(dq.amax() <= 1e-12 * t.precision.to_dense().amax());
        for (k, &c) in t.poly.terms() {
            prop_assert!((back.poly.coeff(k) - c).abs() <= 1e-12 * t.poly.max_abs_coeff());
        }
    }

    #[test]
    fn gram_is_symmetric_positive_definite(seed in any::<u64>(), n in 2usize..6) {
        let e = TermGenerator::new(seed).expansion3(n);
        let g = e.gram(l2_inner).unwrap();
        prop_assert!((&g - g.transpose()).amax() <= 1e-12 * g.amax());
        prop_assert!(g.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn h1_norm_is_l2_plus_seminorm(seed in any::<u64>()) {
        let e = TermGenerator::new(seed).expansion3(3);
        let n1 = e.sobolev_inner(&e, 1).unwrap();
        let split = e.sobolev_inner(&e, 0).unwrap() + e.h1_semi_inner(&e).unwrap();
        prop_assert!((n1 - split).abs() <= 1e-12 * n1);
    }

    #[test]
    fn dump_round_trip_is_bit_exact(seed in any::<u64>()) {
        let e = TermGenerator::new(seed).expansion3(3);
        let back = from_json_lines(&to_json_lines(&e).unwrap(), 1, 4).unwrap();
        prop_assert_eq!(back, e);
    }

    #[test]
    fn evaluation_is_linear(seed in any::<u64>()) {
        let e = TermGenerator::new(seed).expansion3(2);
        let x = point(seed, 3, 0);
        let parts: f64 = e.terms.iter().map(|t| t.eval(&x)).sum();
        prop_assert!((e.evaluate(&x) - parts).abs() <= 1e-14 * parts.abs().max(1.0));
    }
}
