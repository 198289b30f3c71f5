use gausskern::gaussalg::GaussianExpansion;
use gausskern::operators::*;
use gausskern::random::TermGenerator;
use gausskern::GaussHermiteTerm;
use nalgebra::DVector;
use proptest::prelude::*;

fn cfg(gamma: f64) -> OperatorConfig {
    OperatorConfig::new(-1.0, gamma, 0.5, 0.25, &RangeSpec::default()).unwrap()
}

fn narrow(gamma: f64) -> OperatorConfig {
    OperatorConfig::new(-1.0, gamma, 0.5, 0.25, &RangeSpec { r_min: 1e-1, r_max: 1e1, tail_tol: 1e-8 }).unwrap()
}

fn unit() -> GaussianExpansion {
    GaussianExpansion::single(1, GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0)).unwrap()
}

fn diatomic(n: usize) -> MolecularSystem {
    MolecularSystem::new(
        n,
        vec![Nucleus { position: [0.0, 0.0, -0.7], charge: 1.0 }, Nucleus { position: [0.0, 0.0, 0.7], charge: 1.0 }],
    )
    .unwrap()
}

fn input(n: usize, seed: u64) -> GaussianExpansion {
    let mut g = TermGenerator::new(seed);
    GaussianExpansion::from_terms(n, 4, (0..3).map(|_| g.structured_gaussian(n)).collect()).unwrap()
}

#[test]
fn theta_values() {
    assert_eq!(theta_const(1, 1.0), 2.0);
    assert!((theta_const(2, 2.0) - 5.0 * 2f64.sqrt()).abs() < 1e-14);
    assert_eq!(theta_const(1, 2.0), 4.0);
}

#[test]
fn contraction_constant_values() {
    let sys = MolecularSystem::atom(1, 1.0).unwrap();
    let est = contraction_constants(&cfg(1e-2), &sys);
    assert!((est.q - (-1.0f64 / 16.0).exp()).abs() < 1e-15);
    assert_eq!(kappa_star(-1.0, 0.25), 1.0);
    let ratio = contraction_constants(&cfg(0.25e-2), &sys).alpha / est.alpha;
    assert!((ratio - 4f64.powf(-0.25)).abs() < 1e-14);
    assert!((est.operator_bound - est.alpha * level_sum(est.q)).abs() <= 1e-15 * est.operator_bound);
}

#[test]
fn fan_out_matches_interaction_count() {
    for (n, sys) in [(1, MolecularSystem::atom(1, 1.0).unwrap()), (2, MolecularSystem::atom(2, 2.0).unwrap()), (2, diatomic(2))] {
        let c = cfg(1e-2);
        let e = input(n, 7);
        let m = sys.interaction_constant();
        assert_eq!(apply_vk(&e, 1, &sys, &c).unwrap().len(), e.len() * m / 4);
        assert_eq!(apply_t_kl(&e, 1, -2, &sys, &c).unwrap().len(), e.len() * m / 2);
    }
    assert_eq!(MolecularSystem::atom(2, 2.0).unwrap().interaction_constant(), 12);
}

#[test]
fn vk_is_pointwise_product() {
    let sys = MolecularSystem::atom(1, 1.0).unwrap();
    let c = cfg(1e-2);
    let k = 2;
    let e = unit();
    let out = apply_vk(&e, k, &sys, &c).unwrap();
    let w = vk_weight(k, c.h);
    let ek = (k as f64 * c.h).exp();
    let mut g = TermGenerator::new(3);
    for _ in 0..100 {
        let x = [g.uniform(-3.0, 3.0), g.uniform(-3.0, 3.0), g.uniform(-3.0, 3.0)];
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let direct = -w * (-ek * r2).exp() * e.evaluate(&x);
        assert!((out.evaluate(&x) - direct).abs() <= 1e-12 * direct.abs());
    }
}

#[test]
fn gk_example_and_underflow() {
    let c = OperatorConfig { lambda: -1.0, gamma: 0.5, h: 0.5, vartheta: 0.25, k_lo: -5, k_hi: 40 };
    let t = apply_gk(&unit(), 0, &c).unwrap();
    let expected = 0.5 * (-1.0f64).exp() * 3f64.powf(-1.5);
    assert!((t.terms[0].coeff - expected).abs() < 1e-15);
    assert!((t.terms[0].precision.entry(0, 0) - 1.0 / 3.0).abs() < 1e-15);
    let z = apply_gk(&unit(), 40, &c).unwrap();
    assert_eq!(z.len(), 1);
    assert_eq!(z.terms[0].coeff, 0.0);
    assert!(z.drop_zeros().is_empty());
}

#[test]
fn smoothing_pair_examples() {
    let c = cfg(0.5);
    let q = apply_q(&unit(), &c).unwrap();
    assert!((q.terms[0].coeff - 2f64.powf(-1.5)).abs() < 1e-15);
    assert!((q.terms[0].precision.entry(1, 1) - 0.5).abs() < 1e-15);
}

#[test]
fn level_enumeration() {
    let counts: Vec<usize> = (0..4).map(|n| level_pairs(n).len()).collect();
    assert_eq!(counts, vec![1, 4, 8, 12]);
    let mut s = 0.0;
    for n in 0..200u64 {
        s += level_count(n) as f64 * 0.5f64.powi(n as i32);
    }
    assert!((s - 9.0).abs() < 1e-10);
    assert!((level_sum(0.5) - 9.0).abs() < 1e-15);
}

#[test]
fn t_tilde_refuses_non_contractive() {
    let sys = MolecularSystem::atom(1, 1.0).unwrap();
    let c = narrow(0.9);
    assert!(!contraction_constants(&c, &sys).contractive);
    assert!(matches!(
        apply_t_tilde(&unit(), &c, &sys, TTildeOptions::default()),
        Err(gausskern::Error::NonContractive { .. })
    ));
}

#[test]
fn gamma_selection_properties() {
    let sys = MolecularSystem::atom(1, 1.0).unwrap();
    let c = cfg(0.5);
    let g0 = select_gamma(&c, &sys, 0.0).unwrap();
    let q = (-c.vartheta * c.h / 2.0).exp();
    assert!((g0.alpha_limit - 0.5 * ((1.0 - q) / (1.0 + q)).powi(2)).abs() <= 1e-15 * g0.alpha_limit);
    let g1 = select_gamma(&c, &sys, 1.0).unwrap();
    let g2 = select_gamma(&c, &sys, 2.0).unwrap();
    assert!(g2.gamma <= g1.gamma && g1.gamma <= g0.gamma);
    for g in [g1, g2] {
        let alpha = contraction_constants(&c.with_gamma(g.gamma).unwrap(), &sys).alpha;
        let ratio = alpha / g.alpha_limit;
        assert!((1.0 - 1e-4..=1.0).contains(&ratio), "{ratio}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn p_plus_q_is_identity(seed in any::<u64>(), gamma in 0.01f64..0.99) {
        let c = cfg(gamma);
        let e = TermGenerator::new(seed).expansion3(2);
        let p = apply_p(&e, &c).unwrap();
        let q = apply_q(&e, &c).unwrap();
        prop_assert_eq!(p.len(), 2 * e.len());
        let mut g = TermGenerator::new(seed ^ 1);
        for _ in 0..10 {
            let x = [g.uniform(-2.0, 2.0), g.uniform(-2.0, 2.0), g.uniform(-2.0, 2.0)];
            let v = e.evaluate(&x);
            prop_assert!((p.evaluate(&x) + q.evaluate(&x) - v).abs() <= 1e-12 * (v.abs() + 1.0));
        }
    }

    #[test]
    fn resolvent_commutes_with_smoothing(seed in any::<u64>(), k in -6i64..6) {
        let c = cfg(0.3);
        let e = TermGenerator::new(seed).expansion3(2);
        let a = apply_gk(&apply_p(&e, &c).unwrap(), k, &c).unwrap();
        let b = apply_p(&apply_gk(&e, k, &c).unwrap(), &c).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (s, t) in a.terms.iter().zip(&b.terms) {
            prop_assert!((s.coeff - t.coeff).abs() <= 1e-12 * s.coeff.abs().max(1e-300));
            let d = s.precision.to_dense() - t.precision.to_dense();
            prop_assert!(d.amax() <= 1e-12 * s.precision.to_dense().amax());
        }
    }

    #[test]
    fn composed_operator_respects_its_bound(seed in any::<u64>()) {
        let sys = MolecularSystem::atom(1, 1.0).unwrap();
        let base = narrow(0.5);
        let gamma = select_gamma(&base, &sys, 0.0).unwrap().gamma;
        let c = base.with_gamma(gamma).unwrap().with_range(-8, 8);
        let mut g = TermGenerator::new(seed);
        let t = g.gaussian3();
        let u = GaussianExpansion::single(1, GaussHermiteTerm { center: DVector::zeros(3), ..t }).unwrap();
        let (tu, _) = apply_t_tilde(&u, &c, &sys, TTildeOptions::default()).unwrap();
        let ratio = tu.drop_zeros().h1_norm().unwrap() / u.h1_norm().unwrap();
        prop_assert!(ratio <= contraction_constants(&c, &sys).operator_bound, "{}", ratio);
    }
}
