use super::checks::{
    hardy_check, hardy_rellich_check, k_functional_check, projected_resolvent_check, resolvent_component_check, phi_k_decay_check, smoothing_projection_check,
    composed_operator_check, potential_accuracy_check, InequalityCheck,
};
use super::fourier::{fractional_seminorm_sq, FourierQuadOptions};
use super::quad::{integrate3, pair_grid, quad3d, QuadratureGrid, Term3};
use crate::error::{Error, Result};
use crate::expsum::{build_exp_sum, error_bound, error_bound_leading, ExpSumParams, Form};
use crate::gaussalg::{
    apply_gaussian_multiplier, fourier, inverse_fourier, product, GaussFactor, GaussHermiteTerm, GaussianExpansion,
    Precision,
};
use crate::operators::{vk_factors, MolecularSystem, OperatorConfig, RangeSpec};
use crate::random::TermGenerator;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Expsum,
    Algebra,
    Lemmas,
    Kfunctional,
    All,
}

impl Suite {
    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Expsum => "expsum",
            Suite::Algebra => "algebra",
            Suite::Lemmas => "lemmas",
            Suite::Kfunctional => "kfunctional",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expsum" => Ok(Suite::Expsum),
            "algebra" => Ok(Suite::Algebra),
            "lemmas" => Ok(Suite::Lemmas),
            "kfunctional" => Ok(Suite::Kfunctional),
            "all" => Ok(Suite::All),
            _ => Err(Error::InvalidParameter(format!(
                "unknown suite {s:?}, expected expsum, algebra, lemmas, kfunctional or all"
            ))),
        }
    }
}

/// Trial counts per suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteSize {
    pub algebra_cases: usize,
    pub inequality_trials: usize,
    pub potential_trials: usize,
    pub kfunctional_cases: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self { algebra_cases: 100, inequality_trials: 50, potential_trials: 10, kfunctional_cases: 10 }
    }
}

impl SuiteSize {
    pub fn smoke() -> Self {
        Self { algebra_cases: 4, inequality_trials: 3, potential_trials: 1, kfunctional_cases: 1 }
    }
}

/// One named check: `worst` is the largest measured ratio or relative error over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckSummary>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn summarize(name: &str, tolerance: f64, values: &[f64]) -> CheckSummary {
    let violations = values.iter().filter(|v| !(**v <= tolerance)).count();
    let worst = values.iter().fold(0.0f64, |m, &v| if v.is_nan() || v > m { v } else { m });
    CheckSummary { name: name.to_string(), trials: values.len(), violations, worst, tolerance, pass: violations == 0 }
}

/// Per-trial seed from the suite seed, a check tag and the trial index.
pub fn trial_seed(seed: u64, tag: &str, trial: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_trials(seed: u64, tag: &str, n: usize, f: impl Fn(&mut TermGenerator, usize) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = TermGenerator::new(trial_seed(seed, tag, i));
            f(&mut g, i)
        })
        .collect()
}

fn check(seed: u64, tag: &str, n: usize, tol: f64, f: impl Fn(&mut TermGenerator, usize) -> Result<f64> + Sync) -> Result<CheckSummary> {
    Ok(summarize(tag, tol, &run_trials(seed, tag, n, f)?))
}

/// Inequality verdicts count as violations above `1 + 1e-6`.
const RATIO_TOL: f64 = 1.0 + 1e-6;

pub fn validate(suite: Suite, seed: u64, size: &SuiteSize) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Expsum | Suite::All) {
        checks.extend(expsum_checks()?);
    }
    if matches!(suite, Suite::Algebra | Suite::All) {
        checks.extend(algebra_checks(seed, size.algebra_cases)?);
    }
    if matches!(suite, Suite::Lemmas | Suite::All) {
        checks.extend(inequality_checks(seed, size)?);
    }
    if matches!(suite, Suite::Kfunctional | Suite::All) {
        checks.extend(kfunctional_checks(seed, size.kfunctional_cases)?);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport { suite: suite.to_string(), seed, checks, pass })
}

pub fn expsum_checks() -> Result<Vec<CheckSummary>> {
    let mut out = Vec::new();
    for (h, tol, tail) in [(0.5, 1e-7, 1e-12), (0.25, 1e-13, 1e-17)] {
        for beta in [0.5, 1.0] {
            let p = ExpSumParams::new(beta, h, 1e-3, 1e3, tail);
            let s = build_exp_sum(&p, Form::ExponentialInR)?;
            let e = s.sup_rel_error(1e-3, 1e3, 1000);
            out.push(summarize(&format!("expsum_sup_rel_error_beta{beta}_h{h}"), tol, &[e]));
        }
    }
    let mut rel = Vec::new();
    for h in [0.5, 0.25, 0.125] {
        for beta in [0.5, 1.0] {
            let a = error_bound(beta, h)?;
            let b = error_bound_leading(beta, h)?;
            rel.push((a - b).abs() / a);
        }
    }
    out.push(summarize("expsum_bound_vs_leading", 1e-6, &rel));
    Ok(out)
}

/// Points `center + U[-r, r]^d`.
fn sample_points(g: &mut TermGenerator, center: &DVector<f64>, r: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| center.iter().map(|c| c + g.uniform(-r, r)).collect()).collect()
}

fn max_rel_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dev = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        dev / scale
    } else {
        dev
    }
}

fn random_factor3(g: &mut TermGenerator, full_rank: bool) -> GaussFactor {
    let q = if full_rank {
        g.spd(3)
    } else {
        let b = DVector::from_fn(3, |_, _| g.rng().sample::<f64, _>(StandardNormal));
        &b * b.transpose()
    };
    let c = g.center(3);
    let coeff = g.uniform(-1.0, 1.0);
    GaussFactor::new(coeff, c, Precision::dense(q))
}

fn heat_grid(t: &GaussHermiteTerm, x: &[f64], alpha: f64, n: usize) -> Result<QuadratureGrid> {
    let qt = t.precision.to_dense();
    let q = &qt + DMatrix::identity(3, 3) / alpha;
    let rhs = &qt * &t.center + DVector::from_column_slice(x) / alpha;
    let c = q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&rhs);
    QuadratureGrid::whitened(&c, &q, 12.0, n)
}

pub fn algebra_checks(seed: u64, n: usize) -> Result<Vec<CheckSummary>> {
    let mut out = Vec::new();
    out.push(check(seed, "product_pointwise", n, 1e-12, |g, i| {
        let t = g.term3();
        let f = random_factor3(g, i % 2 == 0);
        let p = product(&t, &f)?;
        let pts = sample_points(g, &t.center, 1.5, 20);
        let a: Vec<f64> = pts.iter().map(|x| p.eval(x)).collect();
        let b: Vec<f64> = pts.iter().map(|x| t.eval(x) * f.eval(x)).collect();
        Ok(max_rel_deviation(&a, &b))
    })?);
    out.push(check(seed, "product_pointwise_structured", n, 1e-12, |g, i| {
        let sys = MolecularSystem::atom(2, 1.0)?;
        let t = g.structured_gaussian(2);
        let k = (i % 9) as i64 - 4;
        let fs = vk_factors(k, &sys, 0.5);
        let f = &fs[i % fs.len()];
        let p = product(&t, f)?;
        let pts = sample_points(g, &t.center, 1.0, 20);
        let a: Vec<f64> = pts.iter().map(|x| p.eval(x)).collect();
        let b: Vec<f64> = pts.iter().map(|x| t.eval(x) * f.eval(x)).collect();
        Ok(max_rel_deviation(&a, &b))
    })?);
    out.push(check(seed, "multiplier_quadrature", n, 1e-8, |g, _| {
        let t = g.term3();
        let alpha = g.uniform(0.05, 1.0);
        let m = apply_gaussian_multiplier(&t, alpha)?;
        let tt = Term3::new(&t)?;
        let norm = (2.0 * PI * alpha).powf(-1.5);
        let mut worst = 0.0f64;
        for x in sample_points(g, &t.center, 1.0, 3) {
            let grid = heat_grid(&t, &x, alpha, 48)?;
            let kern = |y: &[f64; 3]| {
                let d2 = (y[0] - x[0]).powi(2) + (y[1] - x[1]).powi(2) + (y[2] - x[2]).powi(2);
                norm * (-0.5 * d2 / alpha).exp()
            };
            let v = integrate3(&|y: &[f64; 3]| tt.eval(y) * kern(y), &grid)?;
            let scale = integrate3(&|y: &[f64; 3]| tt.eval(y).abs() * kern(y), &grid)?;
            worst = worst.max((m.eval(&x) - v).abs() / scale);
        }
        Ok(worst)
    })?);
    out.push(check(seed, "multiplier_semigroup_pointwise", n, 1e-12, |g, _| {
        let t = g.term3();
        let (a, b) = (g.uniform(0.05, 1.0), g.uniform(0.05, 1.0));
        let two = apply_gaussian_multiplier(&apply_gaussian_multiplier(&t, a)?, b)?;
        let one = apply_gaussian_multiplier(&t, a + b)?;
        let pts = sample_points(g, &t.center, 1.5, 20);
        let x: Vec<f64> = pts.iter().map(|p| two.eval(p)).collect();
        let y: Vec<f64> = pts.iter().map(|p| one.eval(p)).collect();
        Ok(max_rel_deviation(&x, &y))
    })?);
    out.push(check(seed, "fourier_quadrature", n, 1e-8, |g, _| {
        let t = g.term3();
        let ft = fourier(&t)?;
        let tt = Term3::new(&t)?;
        let w: Vec<f64> = (0..3).map(|_| g.uniform(-1.0, 1.0)).collect();
        let base = QuadratureGrid::whitened(&t.center, &t.precision.to_dense(), 12.0, 48)?;
        let freq = (base.frame.transpose() * nalgebra::Vector3::new(w[0], w[1], w[2])).norm();
        let grid = QuadratureGrid { n: 48 + (1.5 * freq * 12.0).ceil() as usize, ..base };
        let c = (2.0 * PI).powf(-1.5);
        let phase = |x: &[f64; 3]| w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
        let re = c * integrate3(&|x: &[f64; 3]| tt.eval(x) * phase(x).cos(), &grid)?;
        let im = -c * integrate3(&|x: &[f64; 3]| tt.eval(x) * phase(x).sin(), &grid)?;
        let scale = c * integrate3(&|x: &[f64; 3]| tt.eval(x).abs(), &grid)?;
        let v = ft.eval(&w);
        Ok(((v.re - re).powi(2) + (v.im - im).powi(2)).sqrt() / scale)
    })?);
    out.push(check(seed, "fourier_roundtrip_pointwise", n, 1e-12, |g, _| {
        let t = g.term3();
        let (back, im) = inverse_fourier(&fourier(&t)?)?;
        let pts = sample_points(g, &t.center, 1.5, 20);
        let x: Vec<f64> = pts.iter().map(|p| back.eval(p)).collect();
        let y: Vec<f64> = pts.iter().map(|p| t.eval(p)).collect();
        Ok(max_rel_deviation(&x, &y).max(im / t.poly.max_abs_coeff()))
    })?);
    out.push(check(seed, "l2_inner_quadrature", n, 1e-8, |g, _| {
        let (s, t) = (g.term3(), g.term3());
        let e = GaussianExpansion::from_terms(1, 4, vec![s.clone()])?;
        let f = GaussianExpansion::from_terms(1, 4, vec![t.clone()])?;
        let grid = pair_grid(&s, &t, 32)?;
        let (a, b) = (Term3::new(&s)?, Term3::new(&t)?);
        let q = quad3d(&|x: &[f64; 3]| a.eval(x) * b.eval(x), &grid)?;
        let scale = integrate3(&|x: &[f64; 3]| (a.eval(x) * b.eval(x)).abs(), &grid)?;
        Ok((e.l2_inner(&f)? - q.value).abs() / scale)
    })?);
    out.push(check(seed, "h1_inner_quadrature", n, 1e-8, |g, _| {
        let (s, t) = (g.term3(), g.term3());
        let e = GaussianExpansion::from_terms(1, 4, vec![s.clone()])?;
        let f = GaussianExpansion::from_terms(1, 4, vec![t.clone()])?;
        let grid = pair_grid(&s, &t, 32)?;
        let (a, b) = (Term3::new(&s)?, Term3::new(&t)?);
        let dot = |x: &[f64; 3]| {
            let (p, q) = (a.grad(x), b.grad(x));
            p[0] * q[0] + p[1] * q[1] + p[2] * q[2]
        };
        let q = quad3d(&dot, &grid)?;
        let scale = integrate3(&|x: &[f64; 3]| dot(x).abs(), &grid)?;
        Ok((e.h1_semi_inner(&f)? - q.value).abs() / scale)
    })?);
    out.push(check(seed, "integer_seminorms_fourier", n, 1e-8, |g, _| {
        let e = g.expansion3(1);
        let o = FourierQuadOptions::default();
        let s1 = e.h1_semi_inner(&e)?;
        let s2 = e.h2_semi_inner(&e)?;
        let f1 = fractional_seminorm_sq(&e, 1.0, &o)?;
        let f2 = fractional_seminorm_sq(&e, 2.0, &o)?;
        Ok(((f1 - s1).abs() / s1).max((f2 - s2).abs() / s2))
    })?);
    Ok(out)
}

fn ratio(c: InequalityCheck) -> f64 {
    c.ratio
}

pub fn inequality_checks(seed: u64, size: &SuiteSize) -> Result<Vec<CheckSummary>> {
    let n = size.inequality_trials;
    let o = FourierQuadOptions::default();
    let (vartheta, h) = (0.25, 0.5);
    let mut out = Vec::new();
    out.push(check(seed, "hardy", n, RATIO_TOL, |g, _| Ok(ratio(hardy_check(&g.expansion3(2))?)))?);
    for th in [0.25, 0.5, 1.0, 1.4] {
        out.push(check(seed, &format!("hardy_rellich_{th}"), n, RATIO_TOL, |g, _| {
            Ok(ratio(hardy_rellich_check(&g.expansion3(2), th, &o)?))
        })?);
    }
    let ks: Vec<i64> = (-8..=8).collect();
    out.push(check(seed, "phi_k_decay", n, RATIO_TOL, |g, _| {
        let r = phi_k_decay_check(&g.expansion3(2), &ks, vartheta, h, &o)?;
        Ok(r.into_iter().map(ratio).fold(0.0, f64::max))
    })?);
    out.push(check(seed, "resolvent_component_bound", n, RATIO_TOL, |g, i| {
        let k = (i % 17) as i64 - 8;
        Ok(ratio(resolvent_component_check(&g.expansion3(2), k, vartheta, h, -1.0, &o)?))
    })?);
    out.push(check(seed, "smoothing_projection_bound", n, RATIO_TOL, |g, i| {
        let gamma = [1e-1, 1e-2, 1e-3][i % 3];
        Ok(ratio(smoothing_projection_check(&g.expansion3(2), vartheta, gamma, &o)?))
    })?);
    out.push(check(seed, "projected_resolvent_bound", n, RATIO_TOL, |g, _| {
        let gamma = 10f64.powf(g.uniform(-4.0, -0.5));
        Ok(ratio(projected_resolvent_check(&g.expansion3(2), gamma, -1.0, &o)?))
    })?);
    let sys = MolecularSystem::atom(1, 1.0)?;
    let cfg = OperatorConfig::new(-1.0, 1e-2, h, vartheta, &RangeSpec::default())?;
    out.push(check(seed, "composed_operator_decay", n, RATIO_TOL, |g, _| {
        let k = g.rng().random_range(-8..=8);
        let l = g.rng().random_range(-8..=8);
        Ok(ratio(composed_operator_check(&g.expansion3(2), k, l, &sys, &cfg, &o)?))
    })?);
    let fine = RangeSpec { r_min: 1e-18, ..RangeSpec::default() };
    let pcfg = OperatorConfig::new(-1.0, 1e-2, h, vartheta, &fine)?;
    let eps = error_bound(0.5, h)?;
    out.push(check(seed, "potential_accuracy", size.potential_trials, RATIO_TOL, |g, _| {
        Ok(ratio(potential_accuracy_check(&g.expansion3(2), &sys, &pcfg, eps)?))
    })?);
    Ok(out)
}

pub const K_FUNCTIONAL_TRIPLES: [(f64, f64, f64); 3] = [(0.0, 2.0, 0.5), (0.0, 1.0, 0.5), (1.0, 2.0, 0.25)];

pub fn kfunctional_checks(seed: u64, n: usize) -> Result<Vec<CheckSummary>> {
    let o = FourierQuadOptions::default();
    K_FUNCTIONAL_TRIPLES
        .iter()
        .map(|&(t1, t2, s)| {
            check(seed, &format!("k_functional_{t1}_{t2}_{s}"), n, 1e-4, |g, _| {
                Ok(k_functional_check(&g.expansion3(2), (1e-6, 1e6), 221, t1, t2, s, &o)?.rel_error)
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(7, "a", 0), trial_seed(7, "a", 1));
        assert_ne!(trial_seed(7, "a", 0), trial_seed(7, "b", 0));
        assert_eq!(trial_seed(7, "a", 3), trial_seed(7, "a", 3));
    }

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Expsum, Suite::Algebra, Suite::Lemmas, Suite::Kfunctional, Suite::All] {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
