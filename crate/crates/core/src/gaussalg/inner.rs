use super::poly::Poly;
use super::term::{derivative, laplacian, product_terms, GaussHermiteTerm};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Moments `E[y^alpha]` of a centered normal with covariance `sigma` (Isserlis recursion).
pub struct Moments<'a> {
    sigma: &'a DMatrix<f64>,
    cache: HashMap<Vec<u8>, f64>,
}

impl<'a> Moments<'a> {
    pub fn new(sigma: &'a DMatrix<f64>) -> Self {
        let mut cache = HashMap::new();
        cache.insert(vec![0u8; sigma.nrows()], 1.0);
        Self { sigma, cache }
    }

    pub fn get(&mut self, alpha: &[u8]) -> f64 {
        if let Some(&v) = self.cache.get(alpha) {
            return v;
        }
        let total: usize = alpha.iter().map(|&a| a as usize).sum();
        let v = if total % 2 == 1 {
            0.0
        } else {
            let i = alpha.iter().position(|&a| a > 0).unwrap();
            let mut rest = alpha.to_vec();
            rest[i] -= 1;
            let mut acc = 0.0;
            for j in 0..rest.len() {
                if rest[j] == 0 {
                    continue;
                }
                let s = self.sigma[(i, j)];
                if s == 0.0 {
                    continue;
                }
                let mut r2 = rest.clone();
                let mult = r2[j] as f64;
                r2[j] -= 1;
                acc += s * mult * self.get(&r2);
            }
            acc
        };
        self.cache.insert(alpha.to_vec(), v);
        v
    }

    pub fn expect(&mut self, p: &Poly) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in p.terms() {
            acc += c * self.get(k);
        }
        acc
    }
}

/// `int t(x) dx`.
pub fn integral(t: &GaussHermiteTerm) -> Result<f64> {
    if t.coeff == 0.0 || t.poly.is_empty() {
        return Ok(0.0);
    }
    let d = t.dim() as f64;
    let log_det = t.precision.log_det()?;
    let norm = t.coeff * (0.5 * d * (2.0 * PI).ln() - 0.5 * log_det).exp();
    if t.poly.is_constant() {
        return Ok(norm * t.poly.constant_term());
    }
    let sigma = t.precision.inverse()?.to_dense();
    let mut m = Moments::new(&sigma);
    Ok(norm * m.expect(&t.poly))
}

fn check_dims(s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<()> {
    if s.dim() != t.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: t.dim() });
    }
    Ok(())
}

/// `(s, t)` in `L2`.
pub fn l2_inner(s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64> {
    check_dims(s, t)?;
    if s.coeff == 0.0 || t.coeff == 0.0 {
        return Ok(0.0);
    }
    integral(&product_terms(s, t)?)
}

/// `(grad s, grad t)` in `L2`.
pub fn h1_semi_inner(s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64> {
    check_dims(s, t)?;
    if s.coeff == 0.0 || t.coeff == 0.0 {
        return Ok(0.0);
    }
    if s.poly.is_constant() && t.poly.is_constant() {
        let p = product_terms(s, t)?;
        let overlap = integral(&p)?;
        if overlap == 0.0 {
            return Ok(0.0);
        }
        let sigma = p.precision.inverse()?.to_dense();
        let qs = s.precision.to_dense();
        let qt = t.precision.to_dense();
        let tr = (&qs * &sigma * &qt).trace();
        let ds = &p.center - &s.center;
        let dt = &p.center - &t.center;
        let lin = (&qs * ds).dot(&(&qt * dt));
        return Ok(overlap * (tr + lin));
    }
    let mut acc = 0.0;
    for j in 0..s.dim() {
        acc += l2_inner(&derivative(s, j), &derivative(t, j))?;
    }
    Ok(acc)
}

/// `(Laplace s, Laplace t)` in `L2`.
pub fn h2_semi_inner(s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<f64> {
    check_dims(s, t)?;
    if s.coeff == 0.0 || t.coeff == 0.0 {
        return Ok(0.0);
    }
    l2_inner(&laplacian(s), &laplacian(t))
}

/// `||t||_1` with the norm `||u||_0^2 + |u|_1^2`.
pub fn term_h1_norm(t: &GaussHermiteTerm) -> Result<f64> {
    if t.is_pure() {
        let d = t.dim();
        let c = t.coeff * t.poly.constant_term();
        let tr: f64 = (0..d).map(|i| t.precision.entry(i, i)).sum();
        let l2 = c * c * PI.powf(0.5 * d as f64) * (-0.5 * t.precision.log_det()?).exp();
        return Ok((l2 * (1.0 + 0.5 * tr)).sqrt());
    }
    Ok((l2_inner(t, t)? + h1_semi_inner(t, t)?).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussalg::Precision;
    use nalgebra::DVector;

    #[test]
    fn pure_norm_matches_inner_products() {
        let q = Precision::dense(DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5]));
        let g = GaussHermiteTerm::gaussian(-1.7, DVector::from_vec(vec![0.1, 0.2, -0.3]), q);
        let slow = (l2_inner(&g, &g).unwrap() + h1_semi_inner(&g, &g).unwrap()).sqrt();
        assert!((term_h1_norm(&g).unwrap() - slow).abs() < 1e-13 * slow);
    }

    #[test]
    fn gaussian_self_overlap() {
        let g = GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0);
        let v = l2_inner(&g, &g).unwrap();
        assert!((v - PI.powf(1.5)).abs() < 1e-13);
        let k = h1_semi_inner(&g, &g).unwrap();
        assert!((k - 1.5 * PI.powf(1.5)).abs() < 1e-13);
    }

    #[test]
    fn far_apart_overlap_vanishes() {
        let g = GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0);
        let h = GaussHermiteTerm::isotropic(1.0, &[40.0, 0.0, 0.0], 1.0);
        let v = l2_inner(&g, &h).unwrap();
        let exact = PI.powf(1.5) * (-400.0f64).exp();
        assert!((v - exact).abs() < 1e-12 * exact);
        assert!(v < 1e-170);
    }

    #[test]
    fn generic_gradient_path_matches_fast_path() {
        let g = GaussHermiteTerm::isotropic(1.3, &[0.2, 0.0, -0.4], 0.8);
        let h = GaussHermiteTerm::isotropic(-0.7, &[0.5, 1.0, 0.0], 2.1);
        let fast = h1_semi_inner(&g, &h).unwrap();
        let mut slow = 0.0;
        for j in 0..3 {
            slow += l2_inner(&derivative(&g, j), &derivative(&h, j)).unwrap();
        }
        assert!((fast - slow).abs() < 1e-13 * fast.abs());
    }
}
