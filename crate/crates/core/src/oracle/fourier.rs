use super::quad::{mapped_radial, nodes_1d, Rule, SphereRule};
use crate::error::{Error, Result};
use crate::gaussalg::{fourier, tree_sum, GaussHermiteTerm, GaussianExpansion};
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fourier transform of a term in `R^3`, laid out for fast pointwise evaluation.
#[derive(Debug, Clone)]
pub struct Transform3 {
    scale: f64,
    phase: Vector3<f64>,
    sigma: Matrix3<f64>,
    poly: Vec<([i32; 3], Complex64)>,
}

impl Transform3 {
    pub fn new(t: &GaussHermiteTerm) -> Result<Self> {
        if t.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: t.dim() });
        }
        let f = fourier(t)?;
        let s = f.sigma.to_dense();
        Ok(Self {
            scale: f.scale,
            phase: Vector3::new(f.phase[0], f.phase[1], f.phase[2]),
            sigma: Matrix3::from_fn(|i, j| s[(i, j)]),
            poly: f.poly.terms().map(|(k, &c)| ([k[0] as i32, k[1] as i32, k[2] as i32], c)).collect(),
        })
    }

    pub fn sigma(&self) -> &Matrix3<f64> {
        &self.sigma
    }

    pub fn phase(&self) -> &Vector3<f64> {
        &self.phase
    }

    pub fn eval(&self, w: &Vector3<f64>) -> Complex64 {
        let q = w.dot(&(self.sigma * w)).max(0.0);
        let mut p = Complex64::new(0.0, 0.0);
        for (k, c) in &self.poly {
            p += c * (w[0].powi(k[0]) * w[1].powi(k[1]) * w[2].powi(k[2]));
        }
        Complex64::from_polar(self.scale * (-0.5 * q).exp(), -self.phase.dot(w)) * p
    }
}

pub fn transforms(e: &GaussianExpansion) -> Result<Vec<Transform3>> {
    e.terms.iter().filter(|t| t.coeff != 0.0).map(Transform3::new).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierQuadOptions {
    pub n_radial: usize,
    /// Radius of the grid in whitened units.
    pub radius: f64,
    pub radial_power: f64,
    pub n_theta: usize,
    pub n_phi: usize,
    pub max_theta: usize,
}

impl Default for FourierQuadOptions {
    fn default() -> Self {
        Self { n_radial: 48, radius: 12.0, radial_power: 3.0, n_theta: 24, n_phi: 48, max_theta: 200 }
    }
}

impl FourierQuadOptions {
    pub fn refined(&self) -> Self {
        Self { n_radial: 2 * self.n_radial, n_theta: 2 * self.n_theta, n_phi: 2 * self.n_phi, ..*self }
    }
}

/// `int W(|w|^2) exp(-beta |w|^2) |e^(w)|^2 dw` summed over term pairs,
/// each pair on a spherical grid whitened by its joint Gaussian.
pub fn weighted_norm_sq(
    e: &GaussianExpansion,
    beta: f64,
    weight: &(dyn Fn(f64) -> f64 + Sync),
    opts: &FourierQuadOptions,
) -> Result<f64> {
    let ft = transforms(e)?;
    let pairs: Vec<(usize, usize)> = (0..ft.len()).flat_map(|i| (i..ft.len()).map(move |j| (i, j))).collect();
    let radial = mapped_radial(opts.radius, opts.radial_power, opts.n_radial);
    let vals = pairs
        .par_iter()
        .map(|&(i, j)| {
            let v = pair_integral(&ft[i], &ft[j], beta, weight, &radial, opts)?;
            Ok(if i == j { v } else { 2.0 * v })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(tree_sum(&vals))
}

fn pair_integral(
    a: &Transform3,
    b: &Transform3,
    beta: f64,
    weight: &(dyn Fn(f64) -> f64 + Sync),
    radial: &[(f64, f64)],
    opts: &FourierQuadOptions,
) -> Result<f64> {
    let s = a.sigma + b.sigma + Matrix3::identity() * (2.0 * beta);
    let l = s.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let m = l.transpose().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let jac = m.determinant().abs();
    let c = m.transpose() * (a.phase - b.phase);
    let nt = ((opts.radius * c.norm() * 0.6).ceil() as usize + opts.n_theta).min(opts.max_theta);
    let np = (2 * nt).max(opts.n_phi);
    let sphere = SphereRule::new(nt, np);
    let mut vals = Vec::with_capacity(radial.len());
    for &(rho, wr) in radial {
        let mut acc = Vec::with_capacity(sphere.len());
        for (d, wd) in sphere.dirs.iter().zip(&sphere.weights) {
            let w = m * Vector3::new(rho * d[0], rho * d[1], rho * d[2]);
            let r2 = w.norm_squared();
            let f = a.eval(&w) * b.eval(&w).conj();
            acc.push(wd * f.re * weight(r2) * (-beta * r2).exp());
        }
        vals.push(wr * rho * rho * tree_sum(&acc));
    }
    let v = jac * tree_sum(&vals);
    if !v.is_finite() {
        return Err(Error::Quadrature("non-finite Fourier pair integral".into()));
    }
    Ok(v)
}

/// `|v|_theta^2 = int |w|^{2 theta} |v^|^2`.
pub fn fractional_seminorm_sq(v: &GaussianExpansion, theta: f64, opts: &FourierQuadOptions) -> Result<f64> {
    if !(theta > 0.0 && theta <= 2.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, 2], got {theta}")));
    }
    weighted_norm_sq(v, 0.0, &|r2: f64| r2.powf(theta), opts)
}

pub fn fractional_seminorm(v: &GaussianExpansion, theta: f64, opts: &FourierQuadOptions) -> Result<f64> {
    Ok(fractional_seminorm_sq(v, theta, opts)?.max(0.0).sqrt())
}

/// `||v||_s^2 = int (1 + |w|^2)^s |v^|^2`.
pub fn sobolev_norm_sq(v: &GaussianExpansion, s: f64, opts: &FourierQuadOptions) -> Result<f64> {
    weighted_norm_sq(v, 0.0, &|r2: f64| (1.0 + r2).powf(s), opts)
}

/// Gauss-Legendre panels on `[0, rho_max]`: one on `[0, rho0]`, then doubling widths.
pub fn geometric_radial(rho0: f64, rho_max: f64, order: usize) -> Vec<(f64, f64)> {
    let mut out = nodes_1d(Rule::GaussLegendre, order, 0.0, rho0);
    let mut a = rho0;
    while a < rho_max {
        let b = (2.0 * a).min(rho_max);
        out.extend(nodes_1d(Rule::GaussLegendre, order, a, b));
        a = b;
    }
    out
}

/// `int W(|w|^2) |sum_p m_p(|w|^2) e_p^(w)|^2 dw` on an isotropic grid centered at `w = 0`.
pub fn pointwise_norm_sq(
    parts: &[(&GaussianExpansion, &(dyn Fn(f64) -> f64 + Sync))],
    weight: &(dyn Fn(f64) -> f64 + Sync),
    radial: &[(f64, f64)],
    sphere: &SphereRule,
) -> Result<f64> {
    let fts = parts.iter().map(|(e, _)| transforms(e)).collect::<Result<Vec<_>>>()?;
    let vals = radial
        .par_iter()
        .map(|&(rho, wr)| {
            let r2 = rho * rho;
            let mults: Vec<f64> = parts.iter().map(|(_, m)| m(r2)).collect();
            let acc: Vec<f64> = sphere
                .dirs
                .iter()
                .zip(&sphere.weights)
                .map(|(d, wd)| {
                    let w = Vector3::new(rho * d[0], rho * d[1], rho * d[2]);
                    let mut z = Complex64::new(0.0, 0.0);
                    for (ft, &m) in fts.iter().zip(&mults) {
                        if m == 0.0 {
                            continue;
                        }
                        let mut part = Complex64::new(0.0, 0.0);
                        for t in ft {
                            part += t.eval(&w);
                        }
                        z += part * m;
                    }
                    wd * z.norm_sqr()
                })
                .collect();
            wr * r2 * weight(r2) * tree_sum(&acc)
        })
        .collect::<Vec<f64>>();
    let v = tree_sum(&vals);
    if !v.is_finite() {
        return Err(Error::Quadrature("non-finite pointwise Fourier integral".into()));
    }
    Ok(v)
}
