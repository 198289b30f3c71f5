//! Trapezoidal exponential sums for `r^(-beta)`, `beta` in {1/2, 1}.
//!
//! The sums come from discretizing the Gamma-function integral
//! `r^(-beta) = 1/Gamma(beta) * int exp(-e^t r + beta t) dt` with step `h`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Which variable the exponentials act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// `sum w_k exp(-e_k r)` approximating `r^(-beta)`.
    ExponentialInR,
    /// `sum w_k exp(-e_k r^2)` approximating `r^(-2 beta)`; with `beta = 1/2` this is `1/r`.
    GaussianInR,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpSumParams {
    pub beta: f64,
    pub h: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub tail_tol: f64,
}

impl ExpSumParams {
    pub fn new(beta: f64, h: f64, r_min: f64, r_max: f64, tail_tol: f64) -> Self {
        Self { beta, h, r_min, r_max, tail_tol }
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {}", self.h)));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max && self.r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < r_min < r_max, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tail_tol must be positive, got {}",
                self.tail_tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm {
    pub weight: f64,
    pub exponent: f64,
}

/// A truncated exponential sum with its certified relative error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSum {
    pub beta: f64,
    pub h: f64,
    pub form: Form,
    pub k_lo: i64,
    pub k_hi: i64,
    pub terms: Vec<ExpTerm>,
    /// `error_bound(beta, h) + tail_tol`
    pub bound: f64,
    pub tail_tol: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if beta == 0.5 || beta == 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be 1/2 or 1, got {beta}")))
    }
}

pub(crate) fn gamma_of_beta(beta: f64) -> f64 {
    if beta == 0.5 {
        PI.sqrt()
    } else {
        1.0
    }
}

/// Certified relative error `eps(beta, h)` of the untruncated trapezoidal sum.
pub fn error_bound(beta: f64, h: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let lnq = -PI * PI / h;
    let mut sum = 0.0;
    for l in 1..=1_000_000u64 {
        let lf = l as f64;
        let ql = (lnq * lf).exp();
        let q4l = (4.0 * lnq * lf).exp();
        let term = if beta == 0.5 {
            ql / (1.0 + q4l).sqrt()
        } else {
            lf.sqrt() * ql / (1.0 - q4l).sqrt()
        };
        sum += term;
        if term < 1e-3 * f64::EPSILON * sum || term == 0.0 {
            break;
        }
    }
    Ok(if beta == 0.5 {
        2.0 * SQRT_2 * sum
    } else {
        4.0 * PI / h.sqrt() * sum
    })
}

/// Leading term of [`error_bound`]: `2 sqrt2 q` for `beta = 1/2`, `4 pi h^(-1/2) q` for `beta = 1`.
pub fn error_bound_leading(beta: f64, h: f64) -> Result<f64> {
    check_beta(beta)?;
    let q = (-PI * PI / h).exp();
    Ok(if beta == 0.5 { 2.0 * SQRT_2 * q } else { 4.0 * PI / h.sqrt() * q })
}

/// Index range `[k_lo, k_hi]` whose dropped tails stay below `tail_tol` relative error
/// for the variable `s` in `[s_min, s_max]`, half of the tolerance going to each side.
pub(crate) fn truncation_range(beta: f64, h: f64, s_min: f64, s_max: f64, tail_tol: f64) -> Result<(i64, i64)> {
    let g = gamma_of_beta(beta);
    let side = 0.5 * tail_tol;
    let ln_pref = (h / g).ln();

    // lower tail: (h/G) e^{beta (k_lo-1) h} / (1 - e^{-beta h}) <= side * s_max^-beta
    let target = (side * s_max.powf(-beta) * (1.0 - (-beta * h).exp())).ln() - ln_pref;
    let mut k_lo = (target / (beta * h)).floor() as i64 + 1;
    let lower = |k: i64| (ln_pref + beta * ((k - 1) as f64) * h).exp() / (1.0 - (-beta * h).exp());
    while lower(k_lo) > side * s_max.powf(-beta) {
        k_lo -= 1;
    }
    while lower(k_lo + 1) <= side * s_max.powf(-beta) {
        k_lo += 1;
    }

    // upper tail: terms past the peak of (e^{kh} s)^beta exp(-e^{kh} s) decrease in s,
    // so the relative tail is largest at s_min
    let term = |k: i64| (ln_pref + beta * (k as f64) * h - ((k as f64) * h).exp() * s_min).exp();
    let peak = ((beta / s_min).ln() / h).ceil() as i64 + 1;
    let upper_tail = |k_hi: i64| {
        let mut acc = 0.0;
        let mut k = k_hi + 1;
        loop {
            let t = term(k);
            acc += t;
            if t <= acc * 1e-18 || t == 0.0 {
                break acc;
            }
            k += 1;
        }
    };
    let limit = side * s_min.powf(-beta);
    let mut k_hi = peak;
    while upper_tail(k_hi) > limit {
        k_hi += 1;
    }
    while k_hi - 1 >= peak && upper_tail(k_hi - 1) <= limit {
        k_hi -= 1;
    }
    if k_hi < k_lo {
        return Err(Error::EmptyRange(format!(
            "tail_tol {tail_tol} leaves no terms on [{s_min}, {s_max}]"
        )));
    }
    Ok((k_lo, k_hi))
}

/// Build the truncated trapezoidal sum on `[r_min, r_max]`.
pub fn build_exp_sum(params: &ExpSumParams, form: Form) -> Result<ExpSum> {
    params.validate()?;
    let ExpSumParams { beta, h, r_min, r_max, tail_tol } = *params;
    let (s_min, s_max) = match form {
        Form::ExponentialInR => (r_min, r_max),
        Form::GaussianInR => (r_min * r_min, r_max * r_max),
    };
    let (k_lo, k_hi) = truncation_range(beta, h, s_min, s_max, tail_tol)?;
    let g = gamma_of_beta(beta);
    let terms = (k_lo..=k_hi)
        .map(|k| {
            let kh = k as f64 * h;
            ExpTerm { weight: h * (beta * kh).exp() / g, exponent: kh.exp() }
        })
        .collect();
    Ok(ExpSum {
        beta,
        h,
        form,
        k_lo,
        k_hi,
        terms,
        bound: error_bound(beta, h)? + tail_tol,
        tail_tol,
    })
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

impl ExpSum {
    fn variable(&self, r: f64) -> f64 {
        match self.form {
            Form::ExponentialInR => r,
            Form::GaussianInR => r * r,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value of the sum at `r > 0`.
    pub fn eval(&self, r: f64) -> f64 {
        let s = self.variable(r);
        neumaier_sum(self.terms.iter().map(|t| t.weight * (-t.exponent * s).exp()))
    }

    /// The function being approximated.
    pub fn exact(&self, r: f64) -> f64 {
        self.variable(r).powf(-self.beta)
    }

    pub fn rel_error(&self, r: f64) -> f64 {
        let s = self.variable(r);
        let scaled = neumaier_sum(
            self.terms
                .iter()
                .map(|t| t.weight * (self.beta * s.ln() - t.exponent * s).exp()),
        );
        (scaled - 1.0).abs()
    }

    /// Sup of the relative error on a logarithmic grid of `n` points.
    pub fn sup_rel_error(&self, r_min: f64, r_max: f64, n: usize) -> f64 {
        log_grid(r_min, r_max, n)
            .into_iter()
            .map(|r| self.rel_error(r))
            .fold(0.0, f64::max)
    }
}

/// `n` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiPoint {
    pub s: f64,
    pub phi: f64,
    pub deviation: f64,
    pub periodicity_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiViolation {
    pub s: f64,
    pub kind: String,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiReport {
    pub beta: f64,
    pub h: f64,
    pub bound: f64,
    pub points: Vec<PhiPoint>,
    pub ok: bool,
    pub first_violation: Option<PhiViolation>,
}

/// Evaluate the periodic function `phi(s) = r^beta * sum(r)`, `r = e^s`, and check it against
/// the bound and against its own shift by `h`.
pub fn validate_phi(beta: f64, h: f64, s_grid: &[f64], tail_tol: f64) -> Result<PhiReport> {
    check_beta(beta)?;
    if let Some(&s) = s_grid.iter().find(|&&s| !(0.0..=h).contains(&s)) {
        return Err(Error::InvalidParameter(format!("grid point {s} outside [0, h]")));
    }
    let params = ExpSumParams::new(beta, h, 1.0, (2.0 * h).exp(), tail_tol);
    let sum = build_exp_sum(&params, Form::ExponentialInR)?;
    let bound = sum.bound;
    let g = gamma_of_beta(beta);
    let phi = |s: f64| {
        neumaier_sum((sum.k_lo..=sum.k_hi).map(|k| {
            let x = k as f64 * h + s;
            h / g * (beta * x - x.exp()).exp()
        }))
    };
    let mut points = Vec::with_capacity(s_grid.len());
    let mut first_violation = None;
    for &s in s_grid {
        let p = phi(s);
        let dev = (p - 1.0).abs();
        let gap = (p - phi(s + h)).abs();
        if first_violation.is_none() {
            if dev > bound {
                first_violation = Some(PhiViolation { s, kind: "bound".into(), excess: dev - bound });
            } else if gap > 10.0 * f64::EPSILON + tail_tol {
                first_violation = Some(PhiViolation {
                    s,
                    kind: "periodicity".into(),
                    excess: gap - 10.0 * f64::EPSILON,
                });
            }
        }
        points.push(PhiPoint { s, phi: p, deviation: dev, periodicity_gap: gap });
    }
    Ok(PhiReport { beta, h, bound, ok: first_violation.is_none(), points, first_violation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_beta() {
        assert!(error_bound(0.7, 0.5).is_err());
        let p = ExpSumParams::new(2.0, 0.5, 1e-3, 1e3, 1e-10);
        assert!(build_exp_sum(&p, Form::ExponentialInR).is_err());
    }

    #[test]
    fn half_at_one() {
        let p = ExpSumParams::new(0.5, 0.5, 1e-3, 1e3, 1e-12);
        let s = build_exp_sum(&p, Form::ExponentialInR).unwrap();
        assert!((s.eval(1.0) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn exponents_increase() {
        let p = ExpSumParams::new(1.0, 0.25, 1e-4, 1e4, 1e-14);
        let s = build_exp_sum(&p, Form::GaussianInR).unwrap();
        assert_eq!(s.terms.len() as i64, s.k_hi - s.k_lo + 1);
        assert!(s.terms.windows(2).all(|w| w[0].exponent < w[1].exponent));
        assert!(s.terms.iter().all(|t| t.weight > 0.0));
    }

    #[test]
    fn too_loose_tolerance_is_empty() {
        let p = ExpSumParams::new(1.0, 0.5, 1.0, 2.0, 1e6);
        assert!(matches!(build_exp_sum(&p, Form::ExponentialInR), Err(Error::EmptyRange(_))));
    }
}
