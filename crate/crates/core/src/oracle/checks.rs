use super::fourier::{fractional_seminorm_sq, sobolev_norm_sq, weighted_norm_sq, FourierQuadOptions};
use super::quad::{SphereRule, Term3};
use crate::error::{Error, Result};
use crate::expsum::neumaier_sum;
use crate::gaussalg::{integral, product, product_terms, tree_sum, GaussFactor, GaussHermiteTerm, GaussianExpansion, Precision};
use crate::operators::{apply_vk, contraction_constants, gk_prefactor, kappa, vk_weight, MolecularSystem, OperatorConfig};
use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::{E, PI};

/// Measured left side, analytic or quadrature right side, and the verdict `lhs <= rhs (1 + 1e-6)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
}

impl InequalityCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        Self { lhs, rhs, ratio, holds: lhs <= rhs * (1.0 + 1e-6) }
    }

    fn with_ratio(lhs: f64, rhs: f64, ratio: f64) -> Self {
        Self { lhs, rhs, ratio, holds: ratio <= 1.0 + 1e-6 }
    }
}

fn check_n1(v: &GaussianExpansion) -> Result<()> {
    if v.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: v.dim() });
    }
    Ok(())
}

fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

fn isotropic_at_origin(t: &GaussHermiteTerm) -> Option<f64> {
    let q = t.precision.to_dense();
    let p = q[(0, 0)];
    let iso = (0..3).all(|i| (0..3).all(|j| q[(i, j)] == if i == j { p } else { 0.0 }));
    (iso && t.center.iter().all(|&c| c == 0.0) && t.poly.is_constant()).then_some(p)
}

/// `int |x|^{-2 vartheta} v(x)^2 dx` for `0 < vartheta < 3/2`.
///
/// Radial inputs have a closed form; everything else goes through
/// `|x|^{-2 vartheta} = Gamma(vartheta)^{-1} int_0^inf t^{vartheta - 1} exp(-t |x|^2) dt`
/// with analytic Gaussian integrals inside and a trapezoid rule in `log t`.
pub fn inverse_power_integral(v: &GaussianExpansion, vartheta: f64) -> Result<f64> {
    check_n1(v)?;
    if !(vartheta > 0.0 && vartheta < 1.5) {
        return Err(Error::InvalidParameter(format!("vartheta must lie in (0, 3/2), got {vartheta}")));
    }
    let terms: Vec<&GaussHermiteTerm> = v.terms.iter().filter(|t| t.coeff != 0.0).collect();
    if terms.is_empty() {
        return Ok(0.0);
    }
    let radial: Option<Vec<(f64, f64)>> =
        terms.iter().map(|t| isotropic_at_origin(t).map(|p| (t.coeff * t.poly.constant_term(), p))).collect();
    if let Some(parts) = radial {
        let m = 1.5 - vartheta;
        let vals: Vec<f64> = parts
            .iter()
            .flat_map(|&(ci, pi)| parts.iter().map(move |&(cj, pj)| ci * cj * (0.5 * (pi + pj)).powf(-m)))
            .collect();
        return Ok(2.0 * PI * gamma(m) * tree_sum(&vals));
    }
    gamma_representation(&terms, v.evaluate(&[0.0; 3]), vartheta, 0.2)
}

fn gamma_representation(terms: &[&GaussHermiteTerm], v0: f64, vartheta: f64, step: f64) -> Result<f64> {
    let mut pairs = Vec::new();
    for i in 0..terms.len() {
        for j in i..terms.len() {
            let p = product_terms(terms[i], terms[j])?;
            pairs.push((if i == j { 1.0 } else { 2.0 }, p));
        }
    }
    let mut lmin = f64::INFINITY;
    let mut lmax = 0.0f64;
    let mut amax = 0.0f64;
    for t in terms {
        let (a, b) = eigen_extremes(&t.precision.to_dense());
        lmin = lmin.min(a);
        lmax = lmax.max(b);
        amax = amax.max(t.center.norm_squared());
    }
    let norm0: f64 = tree_sum(&pairs.iter().map(|(w, p)| Ok(w * integral(p)?)).collect::<Result<Vec<f64>>>()?);
    let inner = |t: f64| -> Result<f64> {
        let f = GaussFactor::new(1.0, DVector::zeros(3), Precision::scalar(3, 2.0 * t));
        let vals = pairs.iter().map(|(w, p)| Ok(w * integral(&product(p, &f)?)?)).collect::<Result<Vec<f64>>>()?;
        Ok(tree_sum(&vals))
    };
    let t_lo = 1e-10 / (1.0 + amax + 1.0 / lmin);
    let t_hi = 1e11 * (1.0 + lmax) * (1.0 + amax * lmax);
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let n = ((b - a) / step).ceil() as usize;
    let h = (b - a) / n as f64;
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let tau = a + i as f64 * h;
        vals.push(h * (vartheta * tau).exp() * inner(tau.exp())?);
    }
    // the integrand is a pure exponential beyond both ends, so the infinite trapezoid sum closes
    let lower = h * norm0 * (vartheta * a).exp() / (vartheta * h).exp_m1();
    let s = vartheta - 1.5;
    let upper = h * PI.powf(1.5) * v0 * v0 * (s * b).exp() / (-s * h).exp_m1();
    Ok((tree_sum(&vals) + lower + upper) / gamma(vartheta))
}

/// `int |x|^{-2} v^2 <= 4 int |grad v|^2`.
pub fn hardy_check(v: &GaussianExpansion) -> Result<InequalityCheck> {
    let lhs = inverse_power_integral(v, 1.0)?;
    let rhs = 4.0 * v.h1_semi_inner(v)?;
    Ok(InequalityCheck::new(lhs, rhs))
}

/// `int |x|^{-2 t} v^2 <= 4^t / min(1, (3 - 2t)^2) |v|_t^2`.
pub fn hardy_rellich_check(v: &GaussianExpansion, vartheta: f64, opts: &FourierQuadOptions) -> Result<InequalityCheck> {
    if !(vartheta > 0.0 && vartheta < 1.5) {
        return Err(Error::InvalidParameter(format!("vartheta must lie in (0, 3/2), got {vartheta}")));
    }
    if vartheta == 1.0 {
        return hardy_check(v);
    }
    let lhs = inverse_power_integral(v, vartheta)?;
    let c = 4f64.powf(vartheta) / (3.0 - 2.0 * vartheta).powi(2).min(1.0);
    Ok(InequalityCheck::new(lhs, c * fractional_seminorm_sq(v, vartheta, opts)?))
}

/// `phi_k u` for the potential Gaussian centered at the origin.
pub fn phi_k_times(u: &GaussianExpansion, k: i64, h: f64) -> Result<GaussianExpansion> {
    let f = GaussFactor::new(vk_weight(k, h), DVector::zeros(3), Precision::scalar(3, 2.0 * (k as f64 * h).exp()));
    let terms = u.terms.iter().map(|t| product(t, &f)).collect::<Result<Vec<_>>>()?;
    u.with_terms(terms)
}

/// `||phi_k u||_0 <= kappa (vartheta h / 2) exp(-vartheta h |k| / 2) |u|_{1 +- vartheta}` for each `k`.
pub fn phi_k_decay_check(u: &GaussianExpansion, ks: &[i64], vartheta: f64, h: f64, opts: &FourierQuadOptions) -> Result<Vec<InequalityCheck>> {
    check_n1(u)?;
    let plus = fractional_seminorm_sq(u, 1.0 + vartheta, opts)?.max(0.0).sqrt();
    let minus = fractional_seminorm_sq(u, 1.0 - vartheta, opts)?.max(0.0).sqrt();
    ks.iter()
        .map(|&k| {
            let lhs = phi_k_times(u, k, h)?.norm(0)?;
            let semi = if k >= 0 { plus } else { minus };
            let rhs = kappa(vartheta) * vartheta * h / 2.0 * (-vartheta * h * k.unsigned_abs() as f64 / 2.0).exp() * semi;
            Ok(InequalityCheck::new(lhs, rhs))
        })
        .collect()
}

/// `|G_k f|_{2 - t} <= h ((2 - t)/(2e))^{(2 - t)/2} exp(e^{kh} lambda + t k h / 2) ||f||_0`.
pub fn resolvent_component_check(f: &GaussianExpansion, k: i64, vartheta: f64, h: f64, lambda: f64, opts: &FourierQuadOptions) -> Result<InequalityCheck> {
    check_n1(f)?;
    let kh = k as f64 * h;
    let s = 2.0 - vartheta;
    let core = weighted_norm_sq(f, 2.0 * kh.exp(), &|r2: f64| r2.powf(s), opts)?.max(0.0).sqrt();
    let f0 = f.norm(0)?;
    let log_lhs = h.ln() + kh + kh.exp() * lambda + core.ln();
    let log_rhs = h.ln() + 0.5 * s * (s / (2.0 * E)).ln() + kh.exp() * lambda + 0.5 * vartheta * kh + f0.ln();
    Ok(InequalityCheck::with_ratio(log_lhs.exp(), log_rhs.exp(), (log_lhs - log_rhs).exp()))
}

/// `||P v||_{1 + t} <= sqrt2 gamma^{1/2 - t} |v|_{2 - t}`.
pub fn smoothing_projection_check(v: &GaussianExpansion, vartheta: f64, gamma: f64, opts: &FourierQuadOptions) -> Result<InequalityCheck> {
    check_n1(v)?;
    let lhs = weighted_norm_sq(v, 0.0, &|r2: f64| (1.0 + r2).powf(1.0 + vartheta) * (-gamma * r2).exp_m1().powi(2), opts)?;
    let rhs = 2f64.sqrt() * gamma.powf(0.5 - vartheta) * fractional_seminorm_sq(v, 2.0 - vartheta, opts)?.max(0.0).sqrt();
    Ok(InequalityCheck::new(lhs.max(0.0).sqrt(), rhs))
}

/// `||G P f||_1 <= sqrt(gamma) ||f||_0` with the exact resolvent.
pub fn projected_resolvent_check(f: &GaussianExpansion, gamma: f64, lambda: f64, opts: &FourierQuadOptions) -> Result<InequalityCheck> {
    check_n1(f)?;
    let lhs = weighted_norm_sq(
        f,
        0.0,
        &|r2: f64| (1.0 + r2) * ((-gamma * r2).exp_m1() / (r2 - lambda)).powi(2),
        opts,
    )?;
    Ok(InequalityCheck::new(lhs.max(0.0).sqrt(), gamma.sqrt() * f.norm(0)?))
}

/// `||G_l P V_k u||_1 <= alpha q^{|k| + |l|} ||u||_1` at one electron.
pub fn composed_operator_check(
    u: &GaussianExpansion,
    k: i64,
    l: i64,
    sys: &MolecularSystem,
    cfg: &OperatorConfig,
    opts: &FourierQuadOptions,
) -> Result<InequalityCheck> {
    check_n1(u)?;
    let est = contraction_constants(cfg, sys);
    let vu = apply_vk(u, k, sys, cfg)?.drop_zeros();
    let pref = gk_prefactor(l, cfg.h, cfg.lambda);
    let beta = 2.0 * (l as f64 * cfg.h).exp();
    let g = cfg.gamma;
    let core = weighted_norm_sq(&vu, beta, &|r2: f64| (1.0 + r2) * (-g * r2).exp_m1().powi(2), opts)?;
    let lhs = pref * core.max(0.0).sqrt();
    let rhs = est.alpha * est.q.powi((k.abs() + l.abs()) as i32) * u.h1_norm()?;
    Ok(InequalityCheck::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFunctionalReport {
    pub theta1: f64,
    pub theta2: f64,
    pub s: f64,
    pub vartheta: f64,
    pub lhs: f64,
    pub lhs_truncated: f64,
    pub constant: f64,
    pub rhs: f64,
    pub rel_error: f64,
}

/// `K(t, u)^2 = int |u^|^2 a b t^2 / (a + b t^2)` with `a = (1+|w|^2)^theta1`, `b = (1+|w|^2)^theta2`.
pub fn k_functional(u: &GaussianExpansion, t: f64, theta1: f64, theta2: f64, opts: &FourierQuadOptions) -> Result<f64> {
    let v = weighted_norm_sq(
        u,
        0.0,
        &|r2: f64| {
            let a = (1.0 + r2).powf(theta1);
            let b = (1.0 + r2).powf(theta2);
            a * b * t * t / (a + b * t * t)
        },
        opts,
    )?;
    Ok(v.max(0.0).sqrt())
}

/// `int_0^inf [t^{-s} K(t, u)]^2 dt/t` against `int_0^inf t^{1-2s}/(1+t^2) dt * ||u||_vartheta^2`.
pub fn k_functional_check(
    u: &GaussianExpansion,
    t_range: (f64, f64),
    n_t: usize,
    theta1: f64,
    theta2: f64,
    s: f64,
    opts: &FourierQuadOptions,
) -> Result<KFunctionalReport> {
    check_n1(u)?;
    if !(theta1 < theta2) || !(s > 0.0 && s < 1.0) {
        return Err(Error::InvalidParameter(format!("need theta1 < theta2 and 0 < s < 1, got {theta1}, {theta2}, {s}")));
    }
    let (a0, b0) = (t_range.0.ln(), t_range.1.ln());
    let h = (b0 - a0) / (n_t - 1) as f64;
    let (ws, t2s): (Vec<f64>, Vec<f64>) = (0..n_t)
        .map(|i| {
            let tau = a0 + i as f64 * h;
            let w = if i == 0 || i + 1 == n_t { 0.5 * h } else { h };
            (w * (-2.0 * s * tau).exp(), (2.0 * tau).exp())
        })
        .unzip();
    let lhs_truncated = weighted_norm_sq(
        u,
        0.0,
        &|r2: f64| {
            let a = (1.0 + r2).powf(theta1);
            let b = (1.0 + r2).powf(theta2);
            neumaier_sum(ws.iter().zip(&t2s).map(|(w, t2)| w * a * b * t2 / (a + b * t2)))
        },
        opts,
    )?;
    let (lo, hi) = t_range;
    let tails = weighted_norm_sq(
        u,
        0.0,
        &|r2: f64| {
            (1.0 + r2).powf(theta2) * lo.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s)
                + (1.0 + r2).powf(theta1) * hi.powf(-2.0 * s) / (2.0 * s)
        },
        opts,
    )?;
    let lhs = lhs_truncated + tails;
    let vartheta = theta1 + s * (theta2 - theta1);
    let constant = 0.5 * PI / (PI * s).sin();
    let rhs = constant * sobolev_norm_sq(u, vartheta, opts)?;
    Ok(KFunctionalReport {
        theta1,
        theta2,
        s,
        vartheta,
        lhs,
        lhs_truncated,
        constant,
        rhs,
        rel_error: (lhs - rhs).abs() / rhs.abs(),
    })
}

/// `||(V~ - V) u||_0 <= theta eps(1/2, h) |u|_1` at one electron and one nucleus,
/// by radial quadrature in `log r` around the nucleus.
pub fn potential_accuracy_check(u: &GaussianExpansion, sys: &MolecularSystem, cfg: &OperatorConfig, eps: f64) -> Result<InequalityCheck> {
    check_n1(u)?;
    if sys.n_electrons != 1 || sys.n_nuclei() != 1 {
        return Err(Error::InvalidParameter("potential check needs one electron and one nucleus".into()));
    }
    let nuc = sys.nuclei[0];
    let a = Vector3::from(nuc.position);
    let z = nuc.charge;
    let ks: Vec<(f64, f64)> = cfg.k_values().map(|k| (vk_weight(k, cfg.h), (k as f64 * cfg.h).exp())).collect();
    let vtilde = |r: f64| neumaier_sum(ks.iter().map(|&(w, e)| w * (-e * r * r).exp()));
    let e_max = ks.last().map(|x| x.1).unwrap_or(1.0);
    let r_lo = 1e-6 / e_max.sqrt();
    let mut reach = 0.0f64;
    for t in &u.terms {
        let (lmin, _) = eigen_extremes(&t.precision.to_dense());
        reach = reach.max((Vector3::new(t.center[0], t.center[1], t.center[2]) - a).norm() + 14.0 / lmin.sqrt());
    }
    let step = cfg.h / 64.0;
    let n = ((reach.ln() - r_lo.ln()) / step).ceil() as usize;
    let sphere = SphereRule::new(16, 32);
    let fast = u.terms.iter().map(Term3::new).collect::<Result<Vec<_>>>()?;
    let eval = |x: &[f64; 3]| fast.iter().map(|t| t.eval(x)).sum::<f64>();
    let u0 = eval(&[a[0], a[1], a[2]]);
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let r = (r_lo.ln() + i as f64 * step).exp();
        let w = if i == 0 || i == n { 0.5 * step } else { step };
        let d = z * (vtilde(r) - 1.0 / r);
        let ang: Vec<f64> = sphere
            .dirs
            .iter()
            .zip(&sphere.weights)
            .map(|(dir, wd)| {
                let x = [a[0] + r * dir[0], a[1] + r * dir[1], a[2] + r * dir[2]];
                let v = eval(&x);
                wd * v * v
            })
            .collect();
        vals.push(w * r * r * r * d * d * tree_sum(&ang));
    }
    let inner_ball = 4.0 * PI * z * z * u0 * u0 * r_lo;
    let lhs = (tree_sum(&vals) + inner_ball).max(0.0).sqrt();
    let rhs = sys.theta() * eps * u.h1_semi_inner(u)?.max(0.0).sqrt();
    Ok(InequalityCheck::new(lhs, rhs))
}
