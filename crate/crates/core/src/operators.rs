//! Split operators acting on Gaussian expansions and their contraction constants.
//!
//! `V_k` multiplies by one term of the Gaussian sum for the potential, `G_k` applies one
//! term of the resolvent symbol `1/(|w|^2 - lambda)`, `Q` is the Gaussian smoothing with
//! width `gamma` and `P = I - Q`. The composed operator is `T = sum_{k,l} G_l P V_k`.

use crate::error::{Error, Result};
use crate::expsum::truncation_range;
use crate::gaussalg::{apply_gaussian_multiplier, product, GaussFactor, GaussianExpansion, Precision};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{E, PI, SQRT_2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub position: [f64; 3],
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularSystem {
    pub n_electrons: usize,
    pub nuclei: Vec<Nucleus>,
}

impl MolecularSystem {
    pub fn new(n_electrons: usize, nuclei: Vec<Nucleus>) -> Result<Self> {
        let s = Self { n_electrons, nuclei };
        s.validate()?;
        Ok(s)
    }

    /// One nucleus of charge `z` at the origin and `n` electrons.
    pub fn atom(n: usize, z: f64) -> Result<Self> {
        Self::new(n, vec![Nucleus { position: [0.0; 3], charge: z }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_electrons == 0 {
            return Err(Error::InvalidParameter("need at least one electron".into()));
        }
        if self.nuclei.is_empty() {
            return Err(Error::InvalidParameter("need at least one nucleus".into()));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if !(n.charge > 0.0 && n.charge.is_finite()) {
                return Err(Error::InvalidParameter(format!("nucleus {i}: charge must be positive")));
            }
            if n.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("nucleus {i}: position must be finite")));
            }
        }
        Ok(())
    }

    pub fn total_charge(&self) -> f64 {
        self.nuclei.iter().map(|n| n.charge).sum()
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclei.len()
    }

    pub fn dim(&self) -> usize {
        3 * self.n_electrons
    }

    /// Four times the number of interaction terms, `4 (K N + N (N - 1) / 2)`.
    pub fn interaction_constant(&self) -> usize {
        let n = self.n_electrons;
        4 * (self.n_nuclei() * n + n * (n - 1) / 2)
    }

    pub fn theta(&self) -> f64 {
        theta_const(self.n_electrons, self.total_charge())
    }

    /// Charge-weighted centroid of the nuclei.
    pub fn centroid(&self) -> [f64; 3] {
        let z = self.total_charge();
        let mut c = [0.0; 3];
        for n in &self.nuclei {
            for (ci, pi) in c.iter_mut().zip(n.position) {
                *ci += n.charge * pi / z;
            }
        }
        c
    }
}

/// `(2 Z + N - 1) sqrt(N)`.
pub fn theta_const(n: usize, z: f64) -> f64 {
    (2.0 * z + n as f64 - 1.0) * (n as f64).sqrt()
}

/// Interval of relevant arguments for the shared index range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub tail_tol: f64,
}

impl Default for RangeSpec {
    fn default() -> Self {
        Self { r_min: 1e-4, r_max: 1e4, tail_tol: 1e-10 }
    }
}

/// Union of the index ranges for the potential sum (in `|x|`) and the resolvent sum
/// (in `|w|^2 - lambda`, bounded below by `-lambda`).
pub fn shared_k_range(h: f64, lambda: f64, spec: &RangeSpec) -> Result<(i64, i64)> {
    let (v_lo, v_hi) = truncation_range(0.5, h, spec.r_min * spec.r_min, spec.r_max * spec.r_max, spec.tail_tol)?;
    let g_min = spec.r_min.max(-lambda);
    let g_max = spec.r_max.max(2.0 * g_min);
    let (g_lo, g_hi) = truncation_range(1.0, h, g_min, g_max, spec.tail_tol)?;
    Ok((v_lo.min(g_lo), v_hi.max(g_hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub h: f64,
    pub vartheta: f64,
    pub k_lo: i64,
    pub k_hi: i64,
}

impl OperatorConfig {
    /// Config with the shared index range derived from `spec`.
    pub fn new(lambda: f64, gamma: f64, h: f64, vartheta: f64, spec: &RangeSpec) -> Result<Self> {
        check_basic(lambda, h, vartheta)?;
        let (k_lo, k_hi) = shared_k_range(h, lambda, spec)?;
        let c = Self { lambda, gamma, h, vartheta, k_lo, k_hi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_basic(self.lambda, self.h, self.vartheta)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.k_lo > self.k_hi {
            return Err(Error::EmptyRange(format!("k_lo {} > k_hi {}", self.k_lo, self.k_hi)));
        }
        Ok(())
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let c = Self { gamma, ..*self };
        c.validate()?;
        Ok(c)
    }

    pub fn with_range(&self, k_lo: i64, k_hi: i64) -> Self {
        Self { k_lo, k_hi, ..*self }
    }

    pub fn k_values(&self) -> impl Iterator<Item = i64> {
        self.k_lo..=self.k_hi
    }
}

fn check_basic(lambda: f64, h: f64, vartheta: f64) -> Result<()> {
    if !(lambda < 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be negative, got {lambda}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    if !(vartheta > 0.0 && vartheta < 0.5) {
        return Err(Error::InvalidParameter(format!("vartheta must lie in (0,1/2), got {vartheta}")));
    }
    Ok(())
}

/// `kappa(vartheta) = pi^{-1/2} ((2 + 2 vartheta)/e)^{(1 + vartheta)/2} * 2 / (vartheta (1 - 2 vartheta))`.
pub fn kappa(vartheta: f64) -> f64 {
    ((2.0 + 2.0 * vartheta) / E).powf((1.0 + vartheta) / 2.0) * 2.0 / (vartheta * (1.0 - 2.0 * vartheta)) / PI.sqrt()
}

/// `max(1, (-vartheta / (lambda e))^vartheta)`.
pub fn kappa_star(lambda: f64, vartheta: f64) -> f64 {
    (-vartheta / (lambda * E)).powf(vartheta).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub theta: f64,
    pub kappa: f64,
    pub kappa_star: f64,
    pub alpha: f64,
    pub q: f64,
    pub operator_bound: f64,
    pub m: usize,
    pub contractive: bool,
}

/// `alpha / gamma^{1/2 - vartheta}`.
pub fn alpha_prefactor(lambda: f64, h: f64, vartheta: f64, sys: &MolecularSystem) -> f64 {
    let n = sys.n_electrons as f64;
    let z = sys.total_charge();
    kappa_star(lambda, vartheta) * kappa(vartheta) * (vartheta * h).powi(2) * (2.0 * z + n - 1.0)
        * n.powf((1.0 + vartheta) / 2.0)
        / (4.0 * SQRT_2)
}

/// `sum_n l(n) q^n = ((1 + q)/(1 - q))^2`.
pub fn level_sum(q: f64) -> f64 {
    ((1.0 + q) / (1.0 - q)).powi(2)
}

pub fn contraction_constants(cfg: &OperatorConfig, sys: &MolecularSystem) -> ContractionEstimate {
    let alpha = alpha_prefactor(cfg.lambda, cfg.h, cfg.vartheta, sys) * cfg.gamma.powf(0.5 - cfg.vartheta);
    let q = (-cfg.vartheta * cfg.h / 2.0).exp();
    let operator_bound = alpha * level_sum(q);
    ContractionEstimate {
        theta: sys.theta(),
        kappa: kappa(cfg.vartheta),
        kappa_star: kappa_star(cfg.lambda, cfg.vartheta),
        alpha,
        q,
        operator_bound,
        m: sys.interaction_constant(),
        contractive: operator_bound < 1.0,
    }
}

/// Largest admissible `alpha` for approximation order `r`: `(1/(2 M^r)) ((1 - q1)/(1 + q1))^{2r+2}`.
pub fn admissible_alpha(vartheta: f64, h: f64, m: usize, r: f64) -> f64 {
    let q1 = (-vartheta * h / (2.0 * (r + 1.0))).exp();
    0.5 * (m as f64).powf(-r) * ((1.0 - q1) / (1.0 + q1)).powf(2.0 * r + 2.0)
}

/// Number of integer pairs `(k, l)` with `|k| + |l| = n`.
pub fn level_count(n: u64) -> u64 {
    (4 * n).max(1)
}

/// Pairs `(k, l)` with `|k| + |l| = n` in lexicographic order.
pub fn level_pairs(n: u64) -> Vec<(i64, i64)> {
    let n = n as i64;
    let mut out = Vec::with_capacity(level_count(n as u64) as usize);
    for k in -n..=n {
        let rest = n - k.abs();
        if rest == 0 {
            out.push((k, 0));
        } else {
            out.push((k, -rest));
            out.push((k, rest));
        }
    }
    out
}

/// Largest level with a pair inside `[k_lo, k_hi]^2`.
pub fn max_level(cfg: &OperatorConfig) -> u64 {
    let m = cfg.k_lo.unsigned_abs().max(cfg.k_hi.unsigned_abs());
    2 * m
}

fn in_range(cfg: &OperatorConfig, k: i64) -> bool {
    k >= cfg.k_lo && k <= cfg.k_hi
}

/// Weight `(h/sqrt(pi)) e^{kh/2}` of the `k`-th Gaussian in the sum for `1/r`.
pub fn vk_weight(k: i64, h: f64) -> f64 {
    h / PI.sqrt() * (0.5 * k as f64 * h).exp()
}

/// Interaction factors of `V_k`: nucleus-electron first (nucleus-major), then pairs `i < j`.
pub fn vk_factors(k: i64, sys: &MolecularSystem, h: f64) -> Vec<GaussFactor> {
    let n = sys.n_electrons;
    let w = vk_weight(k, h);
    let e = 2.0 * (k as f64 * h).exp();
    let mut out = Vec::with_capacity(sys.interaction_constant() / 4);
    for nuc in &sys.nuclei {
        for i in 0..n {
            let mut q = DMatrix::zeros(n, n);
            q[(i, i)] = e;
            let mut a = DVector::zeros(3 * n);
            for c in 0..3 {
                a[3 * i + c] = nuc.position[c];
            }
            out.push(GaussFactor::new(-nuc.charge * w, a, Precision::structured(q)));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut q = DMatrix::zeros(n, n);
            q[(i, i)] = e;
            q[(j, j)] = e;
            q[(i, j)] = -e;
            q[(j, i)] = -e;
            out.push(GaussFactor::new(w, DVector::zeros(3 * n), Precision::structured(q)));
        }
    }
    out
}

fn check_system(e: &GaussianExpansion, sys: &MolecularSystem) -> Result<()> {
    if e.n_electrons != sys.n_electrons {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: e.dim() });
    }
    Ok(())
}

/// `V_k e`: every term times every interaction factor, term-major.
pub fn apply_vk(e: &GaussianExpansion, k: i64, sys: &MolecularSystem, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    check_system(e, sys)?;
    let factors = vk_factors(k, sys, cfg.h);
    let terms: Vec<_> = e
        .terms
        .par_iter()
        .map(|t| factors.iter().map(|f| product(t, f)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    e.with_terms(terms)
}

/// `sum_k V_k e` over the configured range.
pub fn apply_v_tilde(e: &GaussianExpansion, sys: &MolecularSystem, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    let mut out = e.empty_like();
    for k in cfg.k_values() {
        out.extend(&apply_vk(e, k, sys, cfg)?)?;
    }
    Ok(out.drop_zeros())
}

/// Scalar prefactor `h exp(e^{kh} lambda + kh)` of `G_k`.
pub fn gk_prefactor(k: i64, h: f64, lambda: f64) -> f64 {
    let kh = k as f64 * h;
    h * (kh.exp() * lambda + kh).exp()
}

/// `G_k e`; underflowed prefactors leave zero-coefficient terms in place.
pub fn apply_gk(e: &GaussianExpansion, k: i64, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    let s = gk_prefactor(k, cfg.h, cfg.lambda);
    let alpha = 2.0 * (k as f64 * cfg.h).exp();
    let terms = e
        .terms
        .par_iter()
        .map(|t| {
            if s == 0.0 || t.coeff == 0.0 {
                Ok(t.scaled(0.0))
            } else {
                apply_gaussian_multiplier(&t.scaled(s), alpha)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    e.with_terms(terms)
}

/// `Q e`: Gaussian smoothing with multiplier `exp(-gamma |w|^2)`.
pub fn apply_q(e: &GaussianExpansion, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    let terms = e
        .terms
        .par_iter()
        .map(|t| apply_gaussian_multiplier(t, 2.0 * cfg.gamma))
        .collect::<Result<Vec<_>>>()?;
    e.with_terms(terms)
}

/// `P e = e - Q e`, original terms first.
pub fn apply_p(e: &GaussianExpansion, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    let q = apply_q(e, cfg)?;
    e.axpy(-1.0, &q)
}

/// `G_l P V_k e` without dropping zeros.
pub fn apply_t_kl(e: &GaussianExpansion, k: i64, l: i64, sys: &MolecularSystem, cfg: &OperatorConfig) -> Result<GaussianExpansion> {
    let pv = apply_p(&apply_vk(e, k, sys, cfg)?, cfg)?;
    apply_gk(&pv, l, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TTildeOptions {
    /// Apply even when the contraction estimate is not below one.
    pub allow_noncontractive: bool,
    /// Only levels `n <= max_level`.
    pub max_level: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: u64,
    pub pairs_enumerated: u64,
    pub pairs_in_range: u64,
    pub terms: usize,
}

/// `T e = sum_n sum_{|k|+|l|=n} G_l P V_k e`, levels ascending, pairs lexicographic.
pub fn apply_t_tilde(
    e: &GaussianExpansion,
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
    opts: TTildeOptions,
) -> Result<(GaussianExpansion, Vec<LevelRecord>)> {
    cfg.validate()?;
    check_system(e, sys)?;
    let est = contraction_constants(cfg, sys);
    if !est.contractive && !opts.allow_noncontractive {
        return Err(Error::NonContractive { operator_bound: est.operator_bound });
    }
    let top = opts.max_level.unwrap_or(u64::MAX).min(max_level(cfg));
    let mut pv: HashMap<i64, GaussianExpansion> = HashMap::new();
    let mut out = e.empty_like();
    let mut records = Vec::new();
    for n in 0..=top {
        let pairs = level_pairs(n);
        if pairs.len() as u64 != level_count(n) {
            return Err(Error::InvariantViolation(format!("level {n} enumerated {} pairs", pairs.len())));
        }
        let active: Vec<(i64, i64)> = pairs.iter().copied().filter(|&(k, l)| in_range(cfg, k) && in_range(cfg, l)).collect();
        for &(k, _) in &active {
            if !pv.contains_key(&k) {
                let v = apply_p(&apply_vk(e, k, sys, cfg)?, cfg)?.drop_zeros();
                pv.insert(k, v);
            }
        }
        let parts = active
            .par_iter()
            .map(|&(k, l)| apply_gk(&pv[&k], l, cfg).map(|g| g.drop_zeros()))
            .collect::<Result<Vec<_>>>()?;
        let mut count = 0;
        for p in parts {
            count += p.len();
            out.extend(&p)?;
        }
        records.push(LevelRecord {
            level: n,
            pairs_enumerated: pairs.len() as u64,
            pairs_in_range: active.len() as u64,
            terms: count,
        });
    }
    Ok((out, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub gamma: f64,
    pub alpha: f64,
    pub alpha_limit: f64,
    /// `alpha(gamma) / alpha_limit`, in `[1 - 1e-4, 1]` unless `gamma` hit the upper end.
    pub ratio: f64,
    pub sqrt_gamma_theta: f64,
    pub weak_condition_holds: bool,
}

/// Largest `gamma` in `(0, 1)` whose `alpha(gamma)` meets the admissibility limit for order `r`.
pub fn select_gamma(cfg: &OperatorConfig, sys: &MolecularSystem, r: f64) -> Result<GammaSelection> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("order r must be >= 0, got {r}")));
    }
    check_basic(cfg.lambda, cfg.h, cfg.vartheta)?;
    let pref = alpha_prefactor(cfg.lambda, cfg.h, cfg.vartheta, sys);
    let expo = 0.5 - cfg.vartheta;
    let limit = admissible_alpha(cfg.vartheta, cfg.h, sys.interaction_constant(), r);
    let alpha = |ln_g: f64| pref * (expo * ln_g).exp();
    let (mut lo, mut hi) = (-300.0 * std::f64::consts::LN_10, 0.0f64);
    if alpha(lo) > limit {
        return Err(Error::NoAdmissibleGamma(format!(
            "alpha(1e-300) = {:.3e} exceeds the limit {limit:.3e}",
            alpha(lo)
        )));
    }
    let top = (1.0f64 - 1e-6).ln();
    let ln_g = if alpha(top) <= limit {
        top
    } else {
        while hi - lo > 1e-7 {
            let mid = 0.5 * (lo + hi);
            if alpha(mid) <= limit {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let gamma = ln_g.exp();
    let a = alpha(ln_g);
    let theta = sys.theta();
    Ok(GammaSelection {
        gamma,
        alpha: a,
        alpha_limit: limit,
        ratio: a / limit,
        sqrt_gamma_theta: gamma.sqrt() * theta,
        weak_condition_holds: gamma.sqrt() * theta < 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_examples() {
        assert_eq!(theta_const(1, 1.0), 2.0);
        assert!((theta_const(2, 2.0) - 5.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(theta_const(1, 2.0), 4.0);
    }

    #[test]
    fn levels() {
        let counts: Vec<usize> = (0..4).map(|n| level_pairs(n).len()).collect();
        assert_eq!(counts, vec![1, 4, 8, 12]);
        let p = level_pairs(2);
        let mut sorted = p.clone();
        sorted.sort();
        assert_eq!(p, sorted);
        assert!(p.iter().all(|(k, l)| k.abs() + l.abs() == 2));
    }

    #[test]
    fn kappa_quarter() {
        assert!((kappa(0.25) - 8.567).abs() < 1e-3);
        assert_eq!(kappa_star(-1.0, 0.25), 1.0);
    }

    #[test]
    fn gamma_selection_hits_the_limit() {
        let sys = MolecularSystem::atom(1, 1.0).unwrap();
        let cfg = OperatorConfig { lambda: -1.0, gamma: 0.5, h: 0.5, vartheta: 0.25, k_lo: -4, k_hi: 4 };
        let s = select_gamma(&cfg, &sys, 1.0).unwrap();
        assert!(s.ratio <= 1.0 && s.ratio >= 1.0 - 1e-4);
        let s2 = select_gamma(&cfg, &sys, 2.0).unwrap();
        assert!(s2.gamma <= s.gamma);
    }
}
