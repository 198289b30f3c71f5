//! Approximate inverse iteration for the ground state of `-Delta + V` in the shifted form
//! `a(u, v) = (grad u, grad v) + (V u, v) + mu (u, v)`.

use crate::error::{Error, Result};
use crate::expsum::error_bound;
use crate::gaussalg::{
    apply_gaussian_multiplier, h1_semi_inner, l2_inner, laplacian, product, product_terms, term_h1_norm,
    times_square_norm, tree_sum, GaussHermiteTerm, GaussianExpansion, Precision,
};
use crate::operators::{shared_k_range, vk_factors, vk_weight, MolecularSystem, RangeSpec};
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A potential acting on Gaussian expansions.
pub trait Potential: Sync {
    fn n_electrons(&self) -> usize;

    /// `V e` as an expansion.
    fn apply(&self, e: &GaussianExpansion) -> Result<GaussianExpansion>;

    /// `(s, V t)`.
    fn inner(&self, s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64>;

    /// Matrix of `(s_i, V s_j)`.
    fn matrix(&self, terms: &[GaussHermiteTerm]) -> Result<DMatrix<f64>> {
        symmetric_matrix(terms, |s, t| self.inner(s, t))
    }

    /// Bound on `V` as an operator from `H1` to `L2`, if it has one.
    fn theta(&self) -> Option<f64>;

    /// Relative accuracy of the Gaussian representation against the exact potential.
    fn accuracy_bound(&self) -> f64;
}

fn symmetric_matrix(
    terms: &[GaussHermiteTerm],
    f: impl Fn(&GaussHermiteTerm, &GaussHermiteTerm) -> Result<f64> + Sync,
) -> Result<DMatrix<f64>> {
    let n = terms.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| f(&terms[i], &terms[j])).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// `sum_k V_k` for a molecular system on the range `[k_lo, k_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoulombPotential {
    pub sys: MolecularSystem,
    pub h: f64,
    pub k_lo: i64,
    pub k_hi: i64,
}

/// A pure Gauss product in `R^3`: `coeff exp(-1/2 (x - c) Q (x - c))`.
struct Pure3 {
    coeff: f64,
    center: Vector3<f64>,
    q: Matrix3<f64>,
}

impl Pure3 {
    fn of(t: &GaussHermiteTerm) -> Option<Self> {
        if t.dim() != 3 || !t.is_pure() {
            return None;
        }
        let q = t.precision.to_dense();
        Some(Self {
            coeff: t.coeff * t.poly.constant_term(),
            center: Vector3::new(t.center[0], t.center[1], t.center[2]),
            q: Matrix3::from_fn(|i, j| q[(i, j)]),
        })
    }

    fn times(&self, o: &Pure3) -> Option<Pure3> {
        let q = self.q + o.q;
        let chol = q.cholesky()?;
        let rhs = self.q * self.center + o.q * o.center;
        let c = chol.solve(&rhs);
        let e = self.center.dot(&(self.q * self.center)) + o.center.dot(&(o.q * o.center)) - c.dot(&rhs);
        Some(Pure3 { coeff: self.coeff * o.coeff * (-0.5 * e).exp(), center: c, q })
    }
}

impl CoulombPotential {
    pub fn new(sys: MolecularSystem, h: f64, k_lo: i64, k_hi: i64) -> Result<Self> {
        if !(h > 0.0) || k_lo > k_hi {
            return Err(Error::InvalidParameter(format!("need h > 0 and k_lo <= k_hi, got h = {h}, [{k_lo}, {k_hi}]")));
        }
        Ok(Self { sys, h, k_lo, k_hi })
    }

    fn ks(&self) -> impl Iterator<Item = i64> {
        self.k_lo..=self.k_hi
    }

    /// Pure terms in one electron: one eigen-decomposition per pair, then `O(1)` per `k`.
    fn pure_inner(&self, s: &Pure3, t: &Pure3) -> Result<f64> {
        let p = s.times(t).ok_or(Error::NotPositiveDefinite)?;
        let eig = SymmetricEigen::new(p.q);
        let lam = eig.eigenvalues;
        let mut vals = Vec::with_capacity(self.sys.n_nuclei() * (self.k_hi - self.k_lo + 1) as usize);
        for nuc in &self.sys.nuclei {
            let d = eig.eigenvectors.transpose() * (p.center - Vector3::from(nuc.position));
            for k in self.ks() {
                let e = 2.0 * (k as f64 * self.h).exp();
                let mut det = 1.0;
                let mut quad = 0.0;
                for i in 0..3 {
                    det *= lam[i] + e;
                    quad += d[i] * d[i] * lam[i] * e / (lam[i] + e);
                }
                vals.push(-nuc.charge * vk_weight(k, self.h) * (2.0 * PI).powf(1.5) / det.sqrt() * (-0.5 * quad).exp());
            }
        }
        Ok(p.coeff * tree_sum(&vals))
    }
}

impl Potential for CoulombPotential {
    fn n_electrons(&self) -> usize {
        self.sys.n_electrons
    }

    fn apply(&self, e: &GaussianExpansion) -> Result<GaussianExpansion> {
        let mut terms = Vec::new();
        for k in self.ks() {
            let fs = vk_factors(k, &self.sys, self.h);
            for t in &e.terms {
                for f in &fs {
                    terms.push(product(t, f)?);
                }
            }
        }
        Ok(e.with_terms(terms)?.drop_zeros())
    }

    fn inner(&self, s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64> {
        if let (Some(a), Some(b)) = (Pure3::of(s), Pure3::of(t)) {
            return self.pure_inner(&a, &b);
        }
        let st = product_terms(s, t)?;
        let mut vals = Vec::new();
        for k in self.ks() {
            for f in vk_factors(k, &self.sys, self.h) {
                vals.push(crate::gaussalg::integral(&product(&st, &f)?)?);
            }
        }
        Ok(tree_sum(&vals))
    }

    fn theta(&self) -> Option<f64> {
        Some(self.sys.theta())
    }

    fn accuracy_bound(&self) -> f64 {
        error_bound(0.5, self.h).unwrap_or(f64::INFINITY)
    }
}

/// `|x|^2` summed over all electrons; ground state `exp(-|x|^2/2)` with eigenvalue `3N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicPotential {
    pub n_electrons: usize,
}

impl Potential for HarmonicPotential {
    fn n_electrons(&self) -> usize {
        self.n_electrons
    }

    fn apply(&self, e: &GaussianExpansion) -> Result<GaussianExpansion> {
        e.with_terms(e.terms.iter().map(times_square_norm).collect())
    }

    fn inner(&self, s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64> {
        l2_inner(s, &times_square_norm(t))
    }

    fn theta(&self) -> Option<f64> {
        None
    }

    fn accuracy_bound(&self) -> f64 {
        0.0
    }
}

/// `(-Delta + mu)^{-1}` as `sum_k h e^{kh - e^{kh} mu} exp(-e^{kh} |w|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedInverse {
    pub mu: f64,
    pub h: f64,
    pub k_lo: i64,
    pub k_hi: i64,
}

impl ShiftedInverse {
    pub fn prefactor(&self, k: i64) -> f64 {
        let kh = k as f64 * self.h;
        self.h * (kh - kh.exp() * self.mu).exp()
    }

    pub fn symbol(&self, r2: f64) -> f64 {
        let v: Vec<f64> = (self.k_lo..=self.k_hi)
            .map(|k| self.prefactor(k) * (-(k as f64 * self.h).exp() * r2).exp())
            .collect();
        tree_sum(&v)
    }

    pub fn apply(&self, e: &GaussianExpansion) -> Result<GaussianExpansion> {
        let parts = (self.k_lo..=self.k_hi)
            .into_par_iter()
            .map(|k| {
                let s = self.prefactor(k);
                if s == 0.0 {
                    return Ok(Vec::new());
                }
                let alpha = 2.0 * (k as f64 * self.h).exp();
                e.terms
                    .iter()
                    .filter(|t| t.coeff != 0.0)
                    .map(|t| apply_gaussian_multiplier(&t.scaled(s), alpha))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        e.with_terms(parts.into_iter().flatten().collect())
    }

    pub fn accuracy_bound(&self) -> f64 {
        error_bound(1.0, self.h).unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `u - (-Delta + mu)^{-1}(-Delta u + mu u + V u - lambda u)`.
    Residual,
    /// `(-Delta + mu)^{-1}(lambda u - V u)`.
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// The update itself, pruned.
    Direct,
    /// Galerkin step on `u` plus a few selected update terms.
    Projected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseIterationConfig {
    pub mu: f64,
    pub variant: Variant,
    pub mode: StepMode,
    pub delta_tol: f64,
    pub max_iter: usize,
    /// Stop when the Rayleigh value changes by less than this.
    pub tol: f64,
    /// Fixed pruning budget; `None` uses `delta_tol ||w||_1 / 4`.
    pub prune_budget: Option<f64>,
    pub h: f64,
    pub range: RangeSpec,
    /// Leading terms of `u` fed to the update in projected mode.
    pub proxy_terms: usize,
    /// Candidate pool size in projected mode.
    pub pool: usize,
    /// New basis functions per projected step.
    pub new_terms: usize,
    pub pivot_tol: f64,
    /// Hard cap on the working expansion in direct mode.
    pub max_terms: Option<usize>,
    /// Shifted reference eigenvalues `(lambda1, lambda2)` for rate checks.
    pub rate_data: Option<(f64, f64)>,
}

impl Default for InverseIterationConfig {
    fn default() -> Self {
        Self {
            mu: 36.0,
            variant: Variant::Potential,
            mode: StepMode::Projected,
            delta_tol: 0.95,
            max_iter: 30,
            tol: 1e-10,
            prune_budget: None,
            h: 0.25,
            range: RangeSpec::default(),
            proxy_terms: 5,
            pool: 400,
            new_terms: 10,
            pivot_tol: 1e-8,
            max_terms: None,
            rate_data: None,
        }
    }
}

/// `c(eta) = (2 + eta)/(2 - eta)`.
pub fn c_eta(eta: f64) -> f64 {
    (2.0 + eta) / (2.0 - eta)
}

/// `sqrt(c(eta)) eta` with `eta = theta / sqrt(mu)`.
pub fn preconditioner_accuracy(theta: f64, mu: f64) -> f64 {
    let eta = theta / mu.sqrt();
    if eta >= 2.0 {
        return f64::INFINITY;
    }
    c_eta(eta).sqrt() * eta
}

impl InverseIterationConfig {
    pub fn validate(&self, theta: Option<f64>) -> Result<()> {
        if !(self.delta_tol > 0.0 && self.delta_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("delta_tol must lie in (0,1), got {}", self.delta_tol)));
        }
        if !(self.h > 0.0) || !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("need h > 0 and mu > 0, got h = {}, mu = {}", self.h, self.mu)));
        }
        if let Some(th) = theta {
            if !(self.mu > th * th / 4.0) {
                return Err(Error::InadmissibleShift(format!(
                    "mu = {} must exceed theta^2/4 = {}",
                    self.mu,
                    th * th / 4.0
                )));
            }
            let acc = preconditioner_accuracy(th, self.mu);
            if !(acc <= self.delta_tol) {
                return Err(Error::InadmissibleShift(format!(
                    "sqrt(c(eta)) eta = {acc:.6} exceeds delta_tol = {} at mu = {}",
                    self.delta_tol, self.mu
                )));
            }
        }
        if self.mode == StepMode::Projected && (self.proxy_terms == 0 || self.pool == 0 || self.new_terms == 0) {
            return Err(Error::InvalidParameter("projected mode needs proxy_terms, pool and new_terms > 0".into()));
        }
        Ok(())
    }

    /// Shared `k` range for the potential and the shifted inverse.
    pub fn k_range(&self) -> Result<(i64, i64)> {
        shared_k_range(self.h, -self.mu, &self.range)
    }

    pub fn shifted_inverse(&self) -> Result<ShiftedInverse> {
        let (k_lo, k_hi) = self.k_range()?;
        Ok(ShiftedInverse { mu: self.mu, h: self.h, k_lo, k_hi })
    }
}

/// The Coulomb potential of `sys` on the configuration's `k` range.
pub fn coulomb(sys: &MolecularSystem, cfg: &InverseIterationConfig) -> Result<CoulombPotential> {
    let (k_lo, k_hi) = cfg.k_range()?;
    CoulombPotential::new(sys.clone(), cfg.h, k_lo, k_hi)
}

/// Overlap, kinetic and potential matrices of a term list.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrices {
    pub s: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

pub fn matrices(terms: &[GaussHermiteTerm], pot: &dyn Potential) -> Result<Matrices> {
    let s = symmetric_matrix(terms, l2_inner)?;
    let d = symmetric_matrix(terms, h1_semi_inner)?;
    let v = pot.matrix(terms)?;
    Ok(Matrices { s, d, v })
}

fn unit_terms(e: &GaussianExpansion) -> (Vec<GaussHermiteTerm>, DVector<f64>) {
    let terms = e.terms.iter().map(|t| t.scaled(1.0 / t.coeff)).collect();
    (terms, e.coefficients())
}

/// Unshifted Rayleigh quotient `((grad u, grad u) + (V u, u)) / (u, u)`.
pub fn rayleigh(u: &GaussianExpansion, pot: &dyn Potential) -> Result<f64> {
    let u = u.drop_zeros();
    let (basis, c) = unit_terms(&u);
    let m = matrices(&basis, pot)?;
    rayleigh_from(&m, &c)
}

fn rayleigh_from(m: &Matrices, c: &DVector<f64>) -> Result<f64> {
    let den = c.dot(&(&m.s * c));
    if !(den > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(c.dot(&((&m.d + &m.v) * c)) / den)
}

/// Shifted quotient `a(u, u) / (u, u)` with `a` including `mu (u, v)`.
pub fn rayleigh_shifted(u: &GaussianExpansion, pot: &dyn Potential, mu: f64) -> Result<f64> {
    Ok(rayleigh(u, pot)? + mu)
}

/// `-Delta u + mu u + V u - lambda_shifted u`.
pub fn residual(u: &GaussianExpansion, pot: &dyn Potential, lambda_shifted: f64, mu: f64) -> Result<GaussianExpansion> {
    let mut r = u.empty_like();
    for t in &u.terms {
        r.push(laplacian(t).scaled(-1.0))?;
    }
    r.extend(&u.scaled(mu - lambda_shifted))?;
    r.extend(&pot.apply(u)?)?;
    Ok(r.drop_zeros())
}

/// Rate function `q(lambda)` of the inverse iteration.
pub fn rate_bound(lambda: f64, lambda1: f64, lambda2: f64, delta: f64) -> Result<f64> {
    if !(lambda1 <= lambda && lambda <= lambda2) || !(0.0..1.0).contains(&delta) || !(lambda1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda1 <= lambda <= lambda2 and 0 <= delta < 1, got {lambda1}, {lambda}, {lambda2}, {delta}"
        )));
    }
    let a = 1.0 - delta * delta;
    let g = (lambda2 - lambda).powi(2);
    Ok(1.0 - a * lambda * g / (lambda2 * lambda2 * lambda + a * g * (lambda - lambda1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iteration: usize,
    /// Rayleigh value after the step, unshifted.
    pub rayleigh: f64,
    pub term_count: usize,
    /// Dual `b`-norm of the residual over the step basis.
    pub residual_norm: Option<f64>,
    pub update_norm: f64,
    pub pruned: usize,
    pub measured_ratio: Option<f64>,
    pub rate_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationHistory {
    pub initial_rayleigh: f64,
    pub records: Vec<StepRecord>,
    pub converged: bool,
    pub stop_reason: String,
    /// `theta eps |u|_1` for normalized `u`: bias of the Gaussian potential against the exact one.
    pub potential_bias_bound: Option<f64>,
    pub preconditioner_accuracy_bound: Option<f64>,
}

impl IterationHistory {
    pub fn rayleigh_values(&self) -> Vec<f64> {
        std::iter::once(self.initial_rayleigh).chain(self.records.iter().map(|r| r.rayleigh)).collect()
    }
}

fn normalize(u: &GaussianExpansion) -> Result<GaussianExpansion> {
    let n = u.norm(0)?;
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(u.scaled(1.0 / n))
}

/// Isotropic Gaussian with the given precision per electron at the charge-weighted centroid.
pub fn initial_guess(sys: &MolecularSystem, precision: f64) -> Result<GaussianExpansion> {
    let c = sys.centroid();
    let n = sys.n_electrons;
    let center = DVector::from_fn(3 * n, |i, _| c[i % 3]);
    let p = if n == 1 {
        Precision::scalar(3, precision)
    } else {
        Precision::structured(DMatrix::identity(n, n) * precision)
    };
    let t = GaussHermiteTerm::gaussian(1.0, center, p);
    normalize(&GaussianExpansion::single(n, t)?)
}

/// Pivoted Cholesky on a positive semidefinite matrix: indices of up to `kmax` pivots.
pub fn pivoted_cholesky(g: &DMatrix<f64>, kmax: usize, tol: f64) -> Vec<usize> {
    let n = g.nrows();
    let mut d: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    let d0 = d.iter().cloned().fold(0.0, f64::max);
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut sel = Vec::new();
    for _ in 0..kmax.min(n) {
        let (j, &dj) = d.iter().enumerate().fold((0, &f64::NEG_INFINITY), |m, x| if *x.1 > *m.1 { x } else { m });
        if !(dj > tol * d0) {
            break;
        }
        let mut col = g.column(j).clone_owned();
        for c in &cols {
            col -= c * c[j];
        }
        col /= dj.sqrt();
        for i in 0..n {
            d[i] -= col[i] * col[i];
        }
        d[j] = f64::NEG_INFINITY;
        cols.push(col);
        sel.push(j);
    }
    sel
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: GaussianExpansion,
    pub rayleigh: f64,
    pub residual_norm: Option<f64>,
    pub update_norm: f64,
    pub pruned: usize,
}

/// `H1` norm of `sum_i c_i basis_i`.
fn combo_h1(m: &Matrices, c: &DVector<f64>) -> f64 {
    c.dot(&((&m.s + &m.d) * c)).max(0.0).sqrt()
}

fn term_norms_scaled(basis: &[GaussHermiteTerm], c: &DVector<f64>) -> Result<Vec<f64>> {
    basis.par_iter().zip(c.as_slice().par_iter()).map(|(t, &ci)| Ok(ci.abs() * term_h1_norm(t)?)).collect()
}

/// The raw update `u - w` before pruning and normalization.
pub fn raw_update(u: &GaussianExpansion, pot: &dyn Potential, cfg: &InverseIterationConfig, lambda_shifted: f64) -> Result<GaussianExpansion> {
    let g = cfg.shifted_inverse()?;
    match cfg.variant {
        Variant::Potential => {
            let rhs = u.scaled(lambda_shifted).axpy(-1.0, &pot.apply(u)?)?;
            Ok(g.apply(&rhs)?.drop_zeros())
        }
        Variant::Residual => {
            let w = g.apply(&residual(u, pot, lambda_shifted, cfg.mu)?)?;
            Ok(u.axpy(-1.0, &w)?.drop_zeros())
        }
    }
}

/// One step from a normalized `u`.
pub fn invit_step(u: &GaussianExpansion, pot: &dyn Potential, cfg: &InverseIterationConfig) -> Result<StepOutcome> {
    match cfg.mode {
        StepMode::Direct => direct_step(u, pot, cfg),
        StepMode::Projected => projected_step(u, pot, cfg),
    }
}

fn direct_step(u: &GaussianExpansion, pot: &dyn Potential, cfg: &InverseIterationConfig) -> Result<StepOutcome> {
    let lam_s = rayleigh(u, pot)? + cfg.mu;
    let next = raw_update(u, pot, cfg, lam_s)?;
    // b(w, w) = lambda_s (u, u - w) - a(u, u - w) for the exact shifted inverse
    let (ub, uc) = unit_terms(u);
    let (nb, nc) = unit_terms(&next);
    let cross = |f: &(dyn Fn(&GaussHermiteTerm, &GaussHermiteTerm) -> Result<f64> + Sync)| -> Result<f64> {
        let rows = ub
            .par_iter()
            .zip(uc.as_slice().par_iter())
            .map(|(s, &a)| {
                let v = nb.iter().zip(nc.iter()).map(|(t, &b)| Ok(a * b * f(s, t)?)).collect::<Result<Vec<f64>>>()?;
                Ok(tree_sum(&v))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(tree_sum(&rows))
    };
    let s_un = cross(&l2_inner)?;
    let a_un = cross(&h1_semi_inner)? + cross(&|s, t| pot.inner(s, t))? + cfg.mu * s_un;
    let wb = (lam_s * s_un - a_un).abs().sqrt();
    let update_norm = wb / cfg.mu.max(1.0).sqrt();
    let budget = cfg.prune_budget.unwrap_or(cfg.delta_tol * update_norm / 4.0);
    let before = next.len();
    let mut pruned = next.prune(budget)?;
    if let Some(cap) = cfg.max_terms {
        if pruned.len() > cap {
            let norms = pruned.term_norms()?;
            let mut order: Vec<usize> = (0..pruned.len()).collect();
            order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
            order.truncate(cap);
            order.sort();
            pruned = pruned.with_terms(order.into_iter().map(|i| pruned.terms[i].clone()).collect())?;
        }
    }
    let removed = before - pruned.len();
    let un = normalize(&pruned)?;
    let rayleigh = rayleigh(&un, pot)?;
    Ok(StepOutcome { u: un, rayleigh, residual_norm: None, update_norm, pruned: removed })
}

fn projected_step(u: &GaussianExpansion, pot: &dyn Potential, cfg: &InverseIterationConfig) -> Result<StepOutcome> {
    let u = u.drop_zeros();
    let (ub, uc) = unit_terms(&u);
    let mu_m = matrices(&ub, pot)?;
    let lam = rayleigh_from(&mu_m, &uc)?;
    let lam_s = lam + cfg.mu;

    let norms = term_norms_scaled(&ub, &uc)?;
    let mut order: Vec<usize> = (0..ub.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order.truncate(cfg.proxy_terms);
    let proxy = u.with_terms(order.iter().map(|&i| u.terms[i].clone()).collect())?;
    let cand = raw_update(&proxy, pot, cfg, lam_s)?;
    let cnorms = cand.term_norms()?;
    let mut corder: Vec<usize> = (0..cand.len()).collect();
    corder.sort_by(|&a, &b| cnorms[b].total_cmp(&cnorms[a]).then(a.cmp(&b)));
    corder.truncate(cfg.pool);
    let pool: Vec<GaussHermiteTerm> = corder.iter().map(|&i| cand.terms[i].scaled(1.0 / cand.terms[i].coeff)).collect();
    let gs = symmetric_matrix(&pool, l2_inner)?;
    let gd = symmetric_matrix(&pool, h1_semi_inner)?;
    let sel = pivoted_cholesky(&(gd + gs * cfg.mu), cfg.new_terms, cfg.pivot_tol);

    let mut basis = ub.clone();
    basis.extend(sel.iter().map(|&i| pool[i].clone()));
    let m = matrices(&basis, pot)?;
    let a = &m.d + &m.v + &m.s * cfg.mu;
    let nu = ub.len();
    let dim = 1 + sel.len();
    let mut t = DMatrix::zeros(basis.len(), dim);
    for i in 0..nu {
        t[(i, 0)] = uc[i];
    }
    for (j, _) in sel.iter().enumerate() {
        t[(nu + j, 1 + j)] = 1.0;
    }
    let a_s = t.transpose() * &a * &t;
    let m_s = t.transpose() * &m.s * &t;
    let mut e0 = DVector::zeros(dim);
    e0[0] = 1.0;
    let rhs = &m_s * &e0 * lam_s;
    let y = a_s.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&rhs);
    let b_s = t.transpose() * (&m.d + &m.s * cfg.mu) * &t;
    let g = &a_s * &e0 - &m_s * &e0 * lam_s;
    let residual_norm = dual_norm(&b_s, &g);

    let cn = &t * &y;
    let mut cu = DVector::zeros(basis.len());
    for i in 0..nu {
        cu[i] = uc[i];
    }
    let update_norm = combo_h1(&m, &(&cu - &cn));
    let budget = cfg.prune_budget.unwrap_or(cfg.delta_tol * update_norm / 4.0);
    let tn = term_norms_scaled(&basis, &cn)?;
    let mut ord: Vec<usize> = (0..basis.len()).collect();
    ord.sort_by(|&a, &b| tn[a].total_cmp(&tn[b]).then(a.cmp(&b)));
    let mut drop = vec![false; basis.len()];
    let mut acc = 0.0;
    for &i in &ord {
        if acc + tn[i] <= budget || cn[i] == 0.0 {
            acc += tn[i];
            drop[i] = true;
        } else {
            break;
        }
    }
    let keep: Vec<usize> = (0..basis.len()).filter(|&i| !drop[i]).collect();
    let kc = DVector::from_iterator(keep.len(), keep.iter().map(|&i| cn[i]));
    let kb: Vec<GaussHermiteTerm> = keep.iter().map(|&i| basis[i].clone()).collect();
    let ks = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m.s[(keep[i], keep[j])]);
    let kd = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m.d[(keep[i], keep[j])]);
    let kv = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m.v[(keep[i], keep[j])]);
    let km = Matrices { s: ks, d: kd, v: kv };
    let n0 = kc.dot(&(&km.s * &kc)).max(0.0).sqrt();
    if !(n0 > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let kc = kc / n0;
    let rayleigh = rayleigh_from(&km, &kc)?;
    let terms = kb.iter().zip(kc.iter()).map(|(t, &c)| t.scaled(c)).collect();
    Ok(StepOutcome {
        u: u.with_terms(terms)?,
        rayleigh,
        residual_norm: Some(residual_norm),
        update_norm,
        pruned: basis.len() - keep.len(),
    })
}

/// `sqrt(g^T B^{-1} g)` with eigenvalues below `1e-14 max` dropped.
fn dual_norm(b: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    let eig = b.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let proj = eig.eigenvectors.transpose() * g;
    let mut acc = 0.0;
    for i in 0..proj.len() {
        let l = eig.eigenvalues[i];
        if l > 1e-14 * top {
            acc += proj[i] * proj[i] / l;
        }
    }
    acc.sqrt()
}

/// Iterate `invit_step` from `u0` until the Rayleigh change drops below `cfg.tol` or `max_iter`.
pub fn run_inverse_iteration(
    pot: &dyn Potential,
    u0: &GaussianExpansion,
    cfg: &InverseIterationConfig,
) -> Result<(f64, GaussianExpansion, IterationHistory)> {
    cfg.validate(pot.theta())?;
    if u0.n_electrons != pot.n_electrons() {
        return Err(Error::DimensionMismatch { expected: 3 * pot.n_electrons(), got: u0.dim() });
    }
    let mut u = u0.drop_zeros();
    if (u.norm(0)? - 1.0).abs() > 4.0 * f64::EPSILON {
        u = normalize(&u)?;
    }
    let mut lam = rayleigh(&u, pot)?;
    if let Some((_, l2)) = cfg.rate_data {
        if !(lam + cfg.mu < l2) {
            return Err(Error::InvalidParameter(format!(
                "initial shifted Rayleigh value {} is not below lambda2 = {l2}",
                lam + cfg.mu
            )));
        }
    }
    let initial = lam;
    let accuracy = pot.theta().map(|th| preconditioner_accuracy(th, cfg.mu));
    let mut records = Vec::new();
    let mut converged = false;
    let mut stop_reason = "max_iter".to_string();
    for it in 1..=cfg.max_iter {
        let out = invit_step(&u, pot, cfg)?;
        if out.rayleigh > lam + 1e-13 * lam.abs().max(1.0) {
            return Err(Error::InvariantViolation(format!(
                "Rayleigh value rose from {lam:.15} to {:.15} at step {it} ({} terms, update norm {:.3e})",
                out.rayleigh,
                out.u.len(),
                out.update_norm
            )));
        }
        let (measured_ratio, bound) = match cfg.rate_data {
            Some((l1, l2)) => {
                let (before, after) = (lam + cfg.mu, out.rayleigh + cfg.mu);
                if before > l1 && before <= l2 {
                    let q = rate_bound(before, l1, l2, accuracy.unwrap_or(0.0).min(cfg.delta_tol))?;
                    (Some((after - l1) / (before - l1)), Some(q))
                } else {
                    (None, None)
                }
            }
            None => (None, None),
        };
        let change = lam - out.rayleigh;
        let out_update_vanished = out.update_norm <= f64::EPSILON * out.u.len() as f64;
        lam = out.rayleigh;
        u = out.u;
        records.push(StepRecord {
            iteration: it,
            rayleigh: lam,
            term_count: u.len(),
            residual_norm: out.residual_norm,
            update_norm: out.update_norm,
            pruned: out.pruned,
            measured_ratio,
            rate_bound: bound,
        });
        if out_update_vanished {
            converged = true;
            stop_reason = "update norm vanished".into();
            break;
        }
        if change.abs() < cfg.tol {
            converged = true;
            stop_reason = "rayleigh change below tolerance".into();
            break;
        }
    }
    if cfg.rate_data.is_none() {
        let best = lam;
        let vals: Vec<f64> = std::iter::once(initial).chain(records.iter().map(|r| r.rayleigh)).collect();
        for (i, r) in records.iter_mut().enumerate() {
            let d = vals[i] - best;
            r.measured_ratio = (d > 0.0).then(|| (vals[i + 1] - best) / d);
        }
    }
    let potential_bias_bound = match pot.theta() {
        Some(th) => Some(th * pot.accuracy_bound() * u.h1_semi_inner(&u)?.max(0.0).sqrt()),
        None => None,
    };
    let history = IterationHistory {
        initial_rayleigh: initial,
        records,
        converged,
        stop_reason,
        potential_bias_bound,
        preconditioner_accuracy_bound: accuracy,
    };
    Ok((lam, u, history))
}
