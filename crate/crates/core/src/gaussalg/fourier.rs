use super::poly::{index_degree, Poly};
use super::precision::Precision;
use super::term::GaussHermiteTerm;
use crate::error::{Error, Result};
use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::HashMap;

/// Unitary Fourier transform of a Gauss-Hermite term:
/// `scale * exp(-i a.w) * P(w) * exp(-1/2 w . S w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub scale: f64,
    pub phase: DVector<f64>,
    pub sigma: Precision,
    pub poly: Poly<Complex64>,
}

impl FourierTerm {
    pub fn eval(&self, w: &[f64]) -> Complex64 {
        let wv = DVector::from_column_slice(w);
        let q = self.sigma.quad_form(&wv).max(0.0);
        let phase = -self.phase.dot(&wv);
        Complex64::from_polar(self.scale * (-0.5 * q).exp(), phase) * self.poly.eval(w)
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }
}

fn i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Polynomials `R_alpha` with `D^alpha exp(-1/2 z.M z) = R_alpha(z) exp(-1/2 z.M z)`.
struct DerivativeTable<'a> {
    m: &'a Precision,
    dim: usize,
    cache: HashMap<Vec<u8>, Poly>,
}

impl<'a> DerivativeTable<'a> {
    fn new(m: &'a Precision) -> Self {
        let dim = m.dim();
        let mut cache = HashMap::new();
        cache.insert(vec![0; dim], Poly::one(dim));
        Self { m, dim, cache }
    }

    fn get(&mut self, alpha: &[u8]) -> Poly {
        if let Some(p) = self.cache.get(alpha) {
            return p.clone();
        }
        let j = alpha.iter().rposition(|&a| a > 0).unwrap();
        let mut lower = alpha.to_vec();
        lower[j] -= 1;
        let r = self.get(&lower);
        let row: Vec<f64> = (0..self.dim).map(|k| -self.m.entry(j, k)).collect();
        let p = r.derivative(j).add(&r.mul_linear(&row));
        self.cache.insert(alpha.to_vec(), p.clone());
        p
    }
}

/// Fourier transform of a term.
pub fn fourier(t: &GaussHermiteTerm) -> Result<FourierTerm> {
    let log_det = t.precision.log_det()?;
    let sigma = t.precision.inverse()?;
    let d = t.dim();
    let mut table = DerivativeTable::new(&sigma);
    let mut poly = Poly::<Complex64>::zero(d);
    for (alpha, &p) in t.poly.terms() {
        let r = table.get(alpha);
        let f = i_pow(index_degree(alpha)) * p;
        for (k, &c) in r.terms() {
            poly.add_term(k.clone(), f * c);
        }
    }
    Ok(FourierTerm { scale: t.coeff * (-0.5 * log_det).exp(), phase: t.center.clone(), sigma, poly })
}

/// Inverse transform; returns the term and the largest discarded imaginary coefficient.
pub fn inverse_fourier(f: &FourierTerm) -> Result<(GaussHermiteTerm, f64)> {
    let log_det_sigma = f.sigma.log_det()?;
    let q = f.sigma.inverse()?;
    let d = f.phase.len();
    let mut table = DerivativeTable::new(&q);
    let mut poly = Poly::<Complex64>::zero(d);
    for (beta, &c) in f.poly.terms() {
        let s = table.get(beta);
        let g = i_pow(3 * index_degree(beta)) * c;
        for (k, &v) in s.terms() {
            poly.add_term(k.clone(), g * v);
        }
    }
    let (real, im) = poly.real_part();
    let term = GaussHermiteTerm {
        coeff: f.scale * (-0.5 * log_det_sigma).exp(),
        center: f.phase.clone(),
        precision: q,
        poly: real,
    };
    Ok((term, im))
}

/// Apply the Fourier multiplier `exp(-alpha/2 |w|^2)`.
pub fn apply_gaussian_multiplier(t: &GaussHermiteTerm, alpha: f64) -> Result<GaussHermiteTerm> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("multiplier alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(t.clone());
    }
    if t.poly.is_constant() {
        let (q, log_det) = t.precision.multiplier(alpha)?;
        return Ok(GaussHermiteTerm {
            coeff: t.coeff * (-0.5 * log_det).exp(),
            center: t.center.clone(),
            precision: q,
            poly: t.poly.clone(),
        });
    }
    let mut f = fourier(t)?;
    f.sigma = f.sigma.shift_identity(alpha);
    let (mut out, _) = inverse_fourier(&f)?;
    let scale = t.poly.max_abs_coeff().max(1.0);
    out.poly = out.poly.chop(1e-300 * scale);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gaussian_is_fixed() {
        let t = GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0);
        let f = fourier(&t).unwrap();
        assert!((f.scale - 1.0).abs() < 1e-15);
        let w = [0.4, -0.1, 0.7];
        assert!((f.eval(&w).re - t.eval(&w)).abs() < 1e-15);
    }

    #[test]
    fn linear_moment() {
        let t = GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0).with_poly(Poly::coordinate(3, 0));
        let f = fourier(&t).unwrap();
        let w = [0.4, -0.1, 0.7];
        let expect = Complex64::new(0.0, -w[0]) * (-0.5 * (0.16 + 0.01 + 0.49f64)).exp();
        assert!((f.eval(&w) - expect).norm() < 1e-15);
    }

    #[test]
    fn round_trip_with_polynomial() {
        let mut p = Poly::zero(3);
        p.add_term(vec![2, 0, 1], 0.7);
        p.add_term(vec![0, 1, 0], -0.2);
        p.add_term(vec![0, 0, 0], 1.1);
        let q = super::super::term::dense_from(3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let t = GaussHermiteTerm::gaussian(0.8, DVector::from_column_slice(&[0.5, -1.0, 0.2]), Precision::dense(q))
            .with_poly(p);
        let (back, im) = inverse_fourier(&fourier(&t).unwrap()).unwrap();
        assert!(im < 1e-14);
        for x in [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]] {
            assert!((back.eval(&x) - t.eval(&x)).abs() < 1e-13);
        }
    }
}
