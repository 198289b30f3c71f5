use super::poly::Poly;
use super::precision::Precision;
use crate::error::{Error, Result};
use nalgebra::DVector;

/// `coeff * P(x - a) * exp(-1/2 (x - a) . Q (x - a))` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteTerm {
    pub coeff: f64,
    pub center: DVector<f64>,
    pub precision: Precision,
    pub poly: Poly,
}

/// Unnormalized Gaussian with positive semidefinite precision, e.g. an interaction factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussFactor {
    pub coeff: f64,
    pub center: DVector<f64>,
    pub precision: Precision,
}

impl GaussHermiteTerm {
    pub fn gaussian(coeff: f64, center: DVector<f64>, precision: Precision) -> Self {
        let d = center.len();
        Self { coeff, center, precision, poly: Poly::one(d) }
    }

    /// `coeff * exp(-p/2 |x - a|^2)`.
    pub fn isotropic(coeff: f64, center: &[f64], p: f64) -> Self {
        let d = center.len();
        Self::gaussian(coeff, DVector::from_column_slice(center), Precision::scalar(d, p))
    }

    pub fn with_poly(mut self, poly: Poly) -> Self {
        self.poly = poly;
        self
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    /// Degree zero with polynomial part exactly 1.
    pub fn is_pure(&self) -> bool {
        self.poly.is_constant() && self.poly.constant_term() == 1.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut t = self.clone();
        t.coeff *= c;
        t
    }

    /// Fold the constant of a degree-0 polynomial into the coefficient.
    pub fn normalized_poly(&self) -> Self {
        if self.poly.is_constant() {
            let c = self.poly.constant_term();
            let mut t = self.clone();
            t.coeff *= c;
            t.poly = Poly::one(self.dim());
            t
        } else {
            self.clone()
        }
    }

    pub fn validate(&self, degree_cap: usize) -> Result<()> {
        let d = self.dim();
        if self.precision.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.precision.dim() });
        }
        if self.poly.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.poly.dim() });
        }
        if !self.precision.is_symmetric() {
            return Err(Error::InvalidParameter("precision is not symmetric".into()));
        }
        self.precision.factor()?;
        if self.degree() > degree_cap {
            return Err(Error::DegreeOverflow { degree: self.degree(), cap: degree_cap });
        }
        if !self.coeff.is_finite() {
            return Err(Error::InvalidParameter("coefficient is not finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = DVector::from_iterator(x.len(), x.iter().zip(self.center.iter()).map(|(a, b)| a - b));
        let q = self.precision.quad_form(&y).max(0.0);
        self.coeff * self.poly.eval(y.as_slice()) * (-0.5 * q).exp()
    }
}

impl GaussFactor {
    pub fn new(coeff: f64, center: DVector<f64>, precision: Precision) -> Self {
        Self { coeff, center, precision }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = DVector::from_iterator(x.len(), x.iter().zip(self.center.iter()).map(|(a, b)| a - b));
        self.coeff * (-0.5 * self.precision.quad_form(&y).max(0.0)).exp()
    }
}

struct Piece<'a> {
    coeff: f64,
    center: &'a DVector<f64>,
    precision: &'a Precision,
    poly: Option<&'a Poly>,
}

fn combine(a: Piece<'_>, b: Piece<'_>) -> Result<GaussHermiteTerm> {
    let d = a.center.len();
    if b.center.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: b.center.len() });
    }
    let q = a.precision.add(b.precision);
    let f = q.factor()?;
    let rhs = a.precision.mul_vec(a.center) + b.precision.mul_vec(b.center);
    let center = f.solve(&rhs);
    let da = a.center - &center;
    let db = b.center - &center;
    let expo = -0.5 * (a.precision.quad_form(&da) + b.precision.quad_form(&db));
    let coeff = a.coeff * b.coeff * expo.exp();
    let shift = |p: Option<&Poly>, dv: &DVector<f64>| -> Option<Poly> {
        p.map(|p| p.shift(&(-dv).as_slice().to_vec()))
    };
    // P(x - a_i) = P(y + (a - a_i)) = P(y - d_i)
    let pa = shift(a.poly, &da);
    let pb = shift(b.poly, &db);
    let poly = match (pa, pb) {
        (Some(x), Some(y)) => x.mul(&y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => Poly::one(d),
    };
    Ok(GaussHermiteTerm { coeff, center, precision: q, poly })
}

/// Product of a term with a factor; precision `Q_t + Q_f`, degree unchanged.
pub fn product(t: &GaussHermiteTerm, f: &GaussFactor) -> Result<GaussHermiteTerm> {
    let poly = if t.is_pure() { None } else { Some(&t.poly) };
    combine(
        Piece { coeff: t.coeff, center: &t.center, precision: &t.precision, poly },
        Piece { coeff: f.coeff, center: &f.center, precision: &f.precision, poly: None },
    )
}

/// Product of two terms; the polynomial parts multiply.
pub fn product_terms(s: &GaussHermiteTerm, t: &GaussHermiteTerm) -> Result<GaussHermiteTerm> {
    let ps = if s.is_pure() { None } else { Some(&s.poly) };
    let pt = if t.is_pure() { None } else { Some(&t.poly) };
    combine(
        Piece { coeff: s.coeff, center: &s.center, precision: &s.precision, poly: ps },
        Piece { coeff: t.coeff, center: &t.center, precision: &t.precision, poly: pt },
    )
}

/// `d/dx_j` of a term: same Gaussian, polynomial `dP/dy_j - (Q y)_j P`.
pub fn derivative(t: &GaussHermiteTerm, j: usize) -> GaussHermiteTerm {
    let d = t.dim();
    let row: Vec<f64> = (0..d).map(|k| t.precision.entry(j, k)).collect();
    let poly = t.poly.derivative(j).add(&t.poly.mul_linear(&row).scale(-1.0));
    GaussHermiteTerm { coeff: t.coeff, center: t.center.clone(), precision: t.precision.clone(), poly }
}

pub fn gradient(t: &GaussHermiteTerm) -> Vec<GaussHermiteTerm> {
    (0..t.dim()).map(|j| derivative(t, j)).collect()
}

/// Laplacian of a term as a single term of degree `+2`.
pub fn laplacian(t: &GaussHermiteTerm) -> GaussHermiteTerm {
    let d = t.dim();
    let mut poly = Poly::zero(d);
    for j in 0..d {
        poly = poly.add(&derivative(&derivative(t, j), j).poly);
    }
    GaussHermiteTerm { coeff: t.coeff, center: t.center.clone(), precision: t.precision.clone(), poly }
}

/// Multiply a term by `|x|^2` restricted to electron blocks, i.e. the harmonic potential.
pub fn times_square_norm(t: &GaussHermiteTerm) -> GaussHermiteTerm {
    // |x|^2 = |y + a|^2 = |y|^2 + 2 a.y + |a|^2
    let d = t.dim();
    let mut q = Poly::constant(d, t.center.norm_squared());
    for j in 0..d {
        let mut idx = vec![0u8; d];
        idx[j] = 2;
        q.add_term(idx.clone(), 1.0);
        idx[j] = 1;
        q.add_term(idx, 2.0 * t.center[j]);
    }
    GaussHermiteTerm {
        coeff: t.coeff,
        center: t.center.clone(),
        precision: t.precision.clone(),
        poly: t.poly.mul(&q),
    }
}

#[cfg(test)]
pub(crate) fn dense_from(rows: usize, data: &[f64]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(rows, rows, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completing_the_square() {
        let t = GaussHermiteTerm::isotropic(1.0, &[0.0, 0.0, 0.0], 1.0);
        let f = GaussFactor::new(1.0, DVector::from_column_slice(&[1.0, 0.0, 0.0]), Precision::scalar(3, 1.0));
        let p = product(&t, &f).unwrap();
        assert!((p.center[0] - 0.5).abs() < 1e-15);
        assert!((p.coeff - (-0.25f64).exp()).abs() < 1e-15);
        assert!((p.precision.entry(0, 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_gaussian() {
        let t = GaussHermiteTerm::isotropic(1.0, &[0.0, 0.0, 0.0], 1.0);
        let l = laplacian(&t);
        // (|x|^2 - 3) e^{-|x|^2/2}
        let x = [0.3, -0.2, 0.5];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        assert!((l.eval(&x) - (r2 - 3.0) * (-0.5 * r2).exp()).abs() < 1e-14);
    }

    #[test]
    fn structured_product_stays_structured() {
        let q = dense_from(2, &[2.0, 0.3, 0.3, 1.0]);
        let t = GaussHermiteTerm::gaussian(1.0, DVector::zeros(6), Precision::structured(q));
        let pair = dense_from(2, &[1.0, -1.0, -1.0, 1.0]);
        let f = GaussFactor::new(0.5, DVector::zeros(6), Precision::structured(pair));
        assert!(product(&t, &f).unwrap().precision.is_structured());
    }
}
