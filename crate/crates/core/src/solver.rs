//! Scheduled Neumann series for `u + T u = f` and the perturbation certificates.

use crate::error::{Error, Result};
use crate::expsum::{error_bound, log_grid};
use crate::gaussalg::{GaussianExpansion, GaussHermiteTerm};
use crate::operators::{
    admissible_alpha, apply_p, apply_t_tilde, apply_v_tilde, apply_vk, contraction_constants, apply_gk, gk_prefactor,
    level_count, level_pairs, level_sum, max_level, MolecularSystem, OperatorConfig, TTildeOptions,
};
use crate::oracle::fourier::{geometric_radial, pointwise_norm_sq};
use crate::oracle::quad::SphereRule;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Terms in schedule order with nonincreasing thresholds: the partial sum of the
/// terms before `j` approximates the target to within `thresholds[j]` in `H1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationSchedule {
    pub expansion: GaussianExpansion,
    pub thresholds: Vec<f64>,
    pub r: f64,
    /// Smallest constant with `n(eps) <= (kappa/eps)^{1/r}` for every `eps > 0`.
    pub kappa: f64,
    /// Smallest constant that works on the tabulation grid only.
    pub kappa_fit: f64,
    /// `(eps, n(eps))` on the tabulation grid.
    pub table: Vec<(f64, usize)>,
}

fn check_order(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!("order r must be > 0, got {r}")));
    }
    Ok(())
}

impl ApproximationSchedule {
    /// Schedule from terms with explicit thresholds, sorted by descending threshold.
    pub fn from_thresholds(expansion: GaussianExpansion, thresholds: Vec<f64>, r: f64, grid: &[f64]) -> Result<Self> {
        check_order(r)?;
        if expansion.len() != thresholds.len() {
            return Err(Error::DimensionMismatch { expected: expansion.len(), got: thresholds.len() });
        }
        let mut order: Vec<usize> = (0..thresholds.len()).collect();
        order.sort_by(|&a, &b| thresholds[b].total_cmp(&thresholds[a]).then(a.cmp(&b)));
        let terms = order.iter().map(|&i| expansion.terms[i].clone()).collect();
        let thresholds: Vec<f64> = order.iter().map(|&i| thresholds[i]).collect();
        let mut s = Self {
            expansion: expansion.with_terms(terms)?,
            thresholds,
            r,
            kappa: 0.0,
            kappa_fit: 0.0,
            table: Vec::new(),
        };
        s.kappa = s.thresholds.iter().enumerate().map(|(j, t)| ((j + 1) as f64).powf(r) * t).fold(0.0, f64::max);
        s.retabulate(grid);
        Ok(s)
    }

    pub fn retabulate(&mut self, grid: &[f64]) {
        self.table = grid.iter().map(|&e| (e, self.n(e))).collect();
        self.kappa_fit = self.table.iter().map(|&(e, n)| e * (n as f64).powf(self.r)).fold(0.0, f64::max);
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Number of leading terms needed for accuracy `eps`.
    pub fn n(&self, eps: f64) -> usize {
        self.thresholds.partition_point(|&t| t > eps)
    }

    pub fn count_bound(&self, eps: f64) -> f64 {
        (self.kappa / eps).powf(1.0 / self.r)
    }

    pub fn prefix(&self, eps: f64) -> GaussianExpansion {
        let mut e = self.expansion.empty_like();
        e.terms = self.expansion.terms[..self.n(eps)].to_vec();
        e
    }

    /// Bound on the `H1` norm of the target.
    pub fn head_bound(&self) -> f64 {
        self.thresholds.first().copied().unwrap_or(0.0)
    }
}

/// Greedy schedule: terms by descending `H1` norm, thresholds are the tail sums of the norms.
pub fn build_schedule(f: &GaussianExpansion, r: f64, grid: &[f64]) -> Result<ApproximationSchedule> {
    check_order(r)?;
    if f.is_empty() {
        return Err(Error::InvalidParameter("cannot schedule an empty expansion".into()));
    }
    let norms = f.term_norms()?;
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut tails = vec![0.0; f.len()];
    let mut acc = 0.0;
    for (pos, &i) in order.iter().enumerate().rev() {
        acc += norms[i];
        tails[pos] = acc;
    }
    let sorted = f.with_terms(order.iter().map(|&i| f.terms[i].clone()).collect())?;
    ApproximationSchedule::from_thresholds(sorted, tails, r, grid)
}

/// Logarithmic grid on `[eps/10, max(norm, eps)]`.
pub fn schedule_grid(eps: f64, norm: f64, n: usize) -> Vec<f64> {
    let lo = eps / 10.0;
    let hi = norm.max(eps);
    log_grid(lo, hi, n.max(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSchedule {
    pub q1: f64,
    pub q2: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub r: f64,
    /// `caps[n]` input terms enter at level `n`; trailing zeros are cut.
    pub caps: Vec<usize>,
}

impl TruncationSchedule {
    pub fn cap(&self, level: usize) -> usize {
        self.caps.get(level).copied().unwrap_or(0)
    }

    /// `sum_n l(n) n_n`.
    pub fn weighted_count(&self) -> u64 {
        self.caps.iter().enumerate().map(|(n, &c)| level_count(n as u64) * c as u64).sum()
    }

    /// `delta^{1/r} ((1 + q1)/(1 - q1))^2 (kappa/eps)^{1/r}`.
    pub fn weighted_count_bound(&self, kappa: f64) -> f64 {
        self.delta.powf(1.0 / self.r) * level_sum(self.q1) * (kappa / self.epsilon).powf(1.0 / self.r)
    }
}

/// Split rates `(q1, q2)` with `q1 q2 = q` and `q2 = q1^r`.
pub fn split_rates(vartheta: f64, h: f64, r: f64) -> (f64, f64) {
    let x = vartheta * h / 2.0;
    ((-x / (r + 1.0)).exp(), (-x * r / (r + 1.0)).exp())
}

/// `M^{-r} ((1 - q1)/(1 + q1))^{2r}`.
pub fn truncation_delta(m: usize, q1: f64, r: f64) -> f64 {
    (m as f64).powf(-r) * ((1.0 - q1) / (1.0 + q1)).powf(2.0 * r)
}

pub fn build_truncation(
    schedule: &ApproximationSchedule,
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
    epsilon: f64,
) -> Result<TruncationSchedule> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    let r = schedule.r;
    let (q1, q2) = split_rates(cfg.vartheta, cfg.h, r);
    let delta = truncation_delta(sys.interaction_constant(), q1, r);
    let mut caps = Vec::new();
    for n in 0..=max_level(cfg) {
        let level_eps = epsilon / delta * q2.powf(-(n as f64));
        let c = schedule.n(level_eps);
        if c == 0 {
            break;
        }
        caps.push(c);
    }
    Ok(TruncationSchedule { q1, q2, delta, epsilon, r, caps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledLevel {
    pub level: u64,
    pub cap: usize,
    pub pairs_in_range: usize,
    pub terms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledApplication {
    pub expansion: GaussianExpansion,
    pub schedule: ApproximationSchedule,
    pub levels: Vec<ScheduledLevel>,
    /// `(alpha/delta) ((1 + q1)/(1 - q1))^2 eps`.
    pub error_bound: f64,
    /// `(M/2) sum_n l(n) n_n`.
    pub fanout_count_bound: u64,
}

fn in_range(cfg: &OperatorConfig, k: i64) -> bool {
    k >= cfg.k_lo && k <= cfg.k_hi
}

/// The scheduled approximation of `T u`: level `n` applies every in-range `T_{k,l}` to the
/// first `caps[n]` terms of `u`. Output terms from input `j` at level `n` carry the threshold
/// `thresholds[j] delta q2^n / 2`.
pub fn apply_t_scheduled(
    u: &ApproximationSchedule,
    trunc: &TruncationSchedule,
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
) -> Result<ScheduledApplication> {
    cfg.validate()?;
    if u.expansion.n_electrons != sys.n_electrons {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: u.expansion.dim() });
    }
    let est = contraction_constants(cfg, sys);
    let top = trunc.caps.first().copied().unwrap_or(0);
    let mut pv: HashMap<i64, Vec<GaussianExpansion>> = HashMap::new();
    let mut out_terms: Vec<GaussHermiteTerm> = Vec::new();
    let mut out_thresholds: Vec<f64> = Vec::new();
    let mut levels = Vec::new();
    for (n, &cap) in trunc.caps.iter().enumerate() {
        let active: Vec<(i64, i64)> =
            level_pairs(n as u64).into_iter().filter(|&(k, l)| in_range(cfg, k) && in_range(cfg, l)).collect();
        for &(k, _) in &active {
            if !pv.contains_key(&k) {
                let per_term = u.expansion.terms[..top]
                    .par_iter()
                    .map(|t| {
                        let single = u.expansion.with_terms(vec![t.clone()])?;
                        apply_p(&apply_vk(&single, k, sys, cfg)?, cfg)
                    })
                    .collect::<Result<Vec<_>>>()?;
                pv.insert(k, per_term);
            }
        }
        let scale = trunc.delta * trunc.q2.powi(n as i32) / 2.0;
        let parts = active
            .par_iter()
            .map(|&(k, l)| {
                (0..cap)
                    .map(|j| Ok((j, apply_gk(&pv[&k][j], l, cfg)?.drop_zeros())))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut count = 0;
        for part in parts {
            for (j, e) in part {
                count += e.len();
                let th = u.thresholds[j] * scale;
                out_thresholds.extend(std::iter::repeat(th).take(e.len()));
                out_terms.extend(e.terms);
            }
        }
        levels.push(ScheduledLevel { level: n as u64, cap, pairs_in_range: active.len(), terms: count });
    }
    let expansion = u.expansion.with_terms(out_terms)?;
    let grid: Vec<f64> = u.table.iter().map(|&(e, _)| e).collect();
    let schedule = ApproximationSchedule::from_thresholds(expansion.clone(), out_thresholds, u.r, &grid)?;
    let m = sys.interaction_constant() as u64;
    Ok(ScheduledApplication {
        expansion,
        schedule,
        levels,
        error_bound: est.alpha / trunc.delta * level_sum(trunc.q1) * trunc.epsilon,
        fanout_count_bound: m / 2 * trunc.weighted_count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Run even when `alpha` exceeds the admissibility limit for order `r`.
    pub allow_inadmissible: bool,
    pub compute_residual: bool,
    /// Extra `k` values on each side for the reference operator.
    pub reference_widen: i64,
    pub grid_points: usize,
    /// Give up on the `N >= 2` residual above this many reference terms.
    pub residual_term_cap: usize,
    pub max_levels: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            allow_inadmissible: false,
            compute_residual: true,
            reference_widen: 4,
            grid_points: 41,
            residual_term_cap: 400,
            max_levels: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub epsilon_bound: f64,
    pub terms: usize,
    /// `2^{-nu} (kappa/(2^nu eps_nu))^{1/r}`.
    pub count_bound: f64,
    /// `operator_bound^nu` times the head bound of `f`.
    pub contribution_bound: f64,
    pub scheduled_levels: Vec<ScheduledLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCertificate {
    pub eps_v_bound: f64,
    pub eps_g_bound: f64,
    pub delta_op_bound: f64,
    pub operator_bound: f64,
    /// Present only when the operator is contractive.
    pub solution_gap_bound: Option<f64>,
    pub smoothing_gap_bound: f64,
    /// `gamma^{1/2} h^{-1/2} e^{-pi^2/h}`.
    pub gap_figure_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub epsilon: f64,
    pub r: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub alpha_limit_bound: f64,
    pub admissible: bool,
    pub operator_bound: f64,
    pub kappa: f64,
    pub kappa_fit: f64,
    pub f_norm: f64,
    pub term_count: usize,
    pub count_bound: f64,
    pub levels: Vec<LevelSummary>,
    pub residual_norm: Option<f64>,
    pub residual_method: String,
    pub reference_slack_bound: f64,
    pub certificate: PerturbationCertificate,
}

pub fn perturbation_certificate(
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
    u_semi1: f64,
    u_semi2: f64,
) -> Result<PerturbationCertificate> {
    let est = contraction_constants(cfg, sys);
    let eps_v = error_bound(0.5, cfg.h)?;
    let eps_g = error_bound(1.0, cfg.h)?;
    let eps = eps_v.max(eps_g);
    let sg = cfg.gamma.sqrt();
    let delta = sys.theta() * sg * (2.0 * eps + eps * eps);
    Ok(PerturbationCertificate {
        eps_v_bound: eps_v,
        eps_g_bound: eps_g,
        delta_op_bound: delta,
        operator_bound: est.operator_bound,
        solution_gap_bound: est.contractive.then(|| delta / (1.0 - est.operator_bound) * u_semi1),
        smoothing_gap_bound: sg * u_semi2,
        gap_figure_bound: sg * cfg.h.powf(-0.5) * (-PI * PI / cfg.h).exp(),
    })
}

/// `u = sum_nu (-1)^nu T^nu f` with level budgets `eps_nu = 2^{-(nu+1)} eps`.
pub fn neumann_solve(
    f: &GaussianExpansion,
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
    epsilon: f64,
    r: f64,
    opts: &SolveOptions,
) -> Result<(GaussianExpansion, SolveReport)> {
    cfg.validate()?;
    check_order(r)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
    }
    if f.n_electrons != sys.n_electrons {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: f.dim() });
    }
    let est = contraction_constants(cfg, sys);
    if !est.contractive {
        return Err(Error::NonContractive { operator_bound: est.operator_bound });
    }
    let limit = admissible_alpha(cfg.vartheta, cfg.h, sys.interaction_constant(), r);
    let admissible = est.alpha <= limit * (1.0 + 1e-12);
    if !admissible && !opts.allow_inadmissible {
        return Err(Error::InvalidParameter(format!(
            "gamma = {:.6e} is not admissible for order r = {r}: alpha = {:.6e} exceeds {:.6e}",
            cfg.gamma, est.alpha, limit
        )));
    }
    let f_norm = f.h1_norm()?;
    let grid = schedule_grid(epsilon, f_norm, opts.grid_points);
    let s0 = build_schedule(f, r, &grid)?;
    let kappa = s0.kappa;
    let head = s0.head_bound();

    let mut u = f.empty_like();
    let mut levels = Vec::new();
    let mut current = s0.clone();
    for nu in 0..opts.max_levels {
        let eps_nu = epsilon * 0.5f64.powi(nu as i32 + 1);
        let contribution = est.operator_bound.powi(nu as i32) * head;
        let mut scheduled_levels = Vec::new();
        let part = if nu == 0 {
            current.prefix(eps_nu)
        } else {
            if contribution <= eps_nu {
                break;
            }
            let trunc = build_truncation(&current, cfg, sys, 2.0 * eps_nu)?;
            let app = apply_t_scheduled(&current, &trunc, cfg, sys)?;
            scheduled_levels = app.levels;
            current = app.schedule;
            app.expansion
        };
        let two_nu = 2f64.powi(nu as i32);
        let count_bound = (kappa / (two_nu * eps_nu)).powf(1.0 / r) / two_nu;
        if admissible && part.len() as f64 > count_bound * (1.0 + 1e-12) {
            return Err(Error::InvariantViolation(format!(
                "level {nu} uses {} terms, above the bound {count_bound:.6e}",
                part.len()
            )));
        }
        levels.push(LevelSummary {
            level: nu,
            epsilon_bound: eps_nu,
            terms: part.len(),
            count_bound,
            contribution_bound: contribution,
            scheduled_levels,
        });
        let sign = if nu % 2 == 0 { 1.0 } else { -1.0 };
        u.extend(&part.scaled(sign))?;
        if nu > 0 && current.is_empty() {
            break;
        }
    }
    let term_count = u.len();
    let count_bound = 2.0 * (2.0 * kappa / epsilon).powf(1.0 / r);
    if admissible && term_count as f64 > count_bound * (1.0 + 1e-12) {
        return Err(Error::InvariantViolation(format!(
            "{term_count} terms exceed the bound {count_bound:.6e}"
        )));
    }
    let (residual_norm, residual_method) = if opts.compute_residual {
        residual(&u, f, cfg, sys, opts)?
    } else {
        (None, "skipped".to_string())
    };
    let certificate = perturbation_certificate(cfg, sys, u.h1_semi_inner(&u)?.max(0.0).sqrt(), u.h2_semi_inner(&u)?.max(0.0).sqrt())?;
    let report = SolveReport {
        epsilon,
        r,
        gamma: cfg.gamma,
        alpha: est.alpha,
        alpha_limit_bound: limit,
        admissible,
        operator_bound: est.operator_bound,
        kappa,
        kappa_fit: s0.kappa_fit,
        f_norm,
        term_count,
        count_bound,
        levels,
        residual_norm,
        residual_method,
        reference_slack_bound: epsilon / 10.0,
        certificate,
    };
    Ok((u, report))
}

/// Reference operator: the same construction on a range widened by `widen` on each side.
pub fn reference_config(cfg: &OperatorConfig, widen: i64) -> OperatorConfig {
    cfg.with_range(cfg.k_lo - widen, cfg.k_hi + widen)
}

fn translated(e: &GaussianExpansion, shift: &DVector<f64>) -> GaussianExpansion {
    let mut out = e.clone();
    for t in &mut out.terms {
        t.center -= shift;
    }
    out
}

/// `||u + T u - f||_1` for the reference operator.
///
/// One electron: pointwise in Fourier space, where the reference `T` acts on `V u` as the
/// scalar symbol `G(w) (1 - exp(-gamma |w|^2))`. More electrons: Gram matrix of the explicit
/// reference expansion when it stays below the term cap.
pub fn residual(
    u: &GaussianExpansion,
    f: &GaussianExpansion,
    cfg: &OperatorConfig,
    sys: &MolecularSystem,
    opts: &SolveOptions,
) -> Result<(Option<f64>, String)> {
    let rcfg = reference_config(cfg, opts.reference_widen);
    if sys.n_electrons == 1 {
        let c = sys.centroid();
        let shift = DVector::from_column_slice(&c);
        let (us, fs) = (translated(u, &shift), translated(f, &shift));
        let vu = apply_v_tilde(&us, &sys_shifted(sys, &c)?, &rcfg)?;
        let ks: Vec<(f64, f64)> =
            rcfg.k_values().map(|l| (gk_prefactor(l, rcfg.h, rcfg.lambda), (l as f64 * rcfg.h).exp())).collect();
        let gamma = rcfg.gamma;
        let symbol = move |r2: f64| {
            let g: f64 = ks.iter().map(|&(p, e)| p * (-e * r2).exp()).sum();
            -g * (-gamma * r2).exp_m1()
        };
        let one = |_: f64| 1.0;
        let minus = |_: f64| -1.0;
        let rho_max = vu
            .terms
            .iter()
            .chain(&us.terms)
            .map(|t| t.precision.to_dense().symmetric_eigenvalues().max())
            .fold(1.0, f64::max)
            .sqrt()
            * 12.0;
        let radial = geometric_radial(1e-3, rho_max, 16);
        let sphere = SphereRule::new(32, 64);
        let v = pointwise_norm_sq(&[(&us, &one), (&fs, &minus), (&vu, &symbol)], &|r2: f64| 1.0 + r2, &radial, &sphere)?;
        return Ok((Some(v.max(0.0).sqrt()), "fourier-pointwise".into()));
    }
    let width = (rcfg.k_hi - rcfg.k_lo + 1) as usize;
    let estimate = u.len() * sys.interaction_constant() / 2 * width * width;
    if estimate > opts.residual_term_cap {
        return Ok((None, format!("skipped: reference needs about {estimate} terms")));
    }
    let (tu, _) = apply_t_tilde(u, &rcfg, sys, TTildeOptions { allow_noncontractive: true, max_level: None })?;
    let res = u.axpy(1.0, &tu)?.axpy(-1.0, f)?;
    Ok((Some(res.h1_norm()?), "gram".into()))
}

/// The same system with every nucleus moved by `-c`.
fn sys_shifted(sys: &MolecularSystem, c: &[f64; 3]) -> Result<MolecularSystem> {
    let nuclei = sys
        .nuclei
        .iter()
        .map(|n| {
            let mut m = *n;
            for i in 0..3 {
                m.position[i] -= c[i];
            }
            m
        })
        .collect();
    MolecularSystem::new(sys.n_electrons, nuclei)
}
