use super::inner::{h1_semi_inner, h2_semi_inner, l2_inner, term_h1_norm};
use super::term::GaussHermiteTerm;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub const DEFAULT_DEGREE_CAP: usize = 4;

/// Finite linear combination of Gauss-Hermite terms on `R^{3N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianExpansion {
    pub terms: Vec<GaussHermiteTerm>,
    pub n_electrons: usize,
    pub degree_cap: usize,
}

/// Sum in a fixed binary tree over the index order.
pub fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}

impl GaussianExpansion {
    pub fn new(n_electrons: usize, degree_cap: usize) -> Self {
        Self { terms: Vec::new(), n_electrons, degree_cap }
    }

    pub fn from_terms(n_electrons: usize, degree_cap: usize, terms: Vec<GaussHermiteTerm>) -> Result<Self> {
        let mut e = Self::new(n_electrons, degree_cap);
        for t in terms {
            e.push(t)?;
        }
        Ok(e)
    }

    pub fn single(n_electrons: usize, t: GaussHermiteTerm) -> Result<Self> {
        Self::from_terms(n_electrons, DEFAULT_DEGREE_CAP, vec![t])
    }

    pub fn dim(&self) -> usize {
        3 * self.n_electrons
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn check_term(&self, t: &GaussHermiteTerm) -> Result<()> {
        if t.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: t.dim() });
        }
        if t.degree() > self.degree_cap {
            return Err(Error::DegreeOverflow { degree: t.degree(), cap: self.degree_cap });
        }
        Ok(())
    }

    pub fn push(&mut self, t: GaussHermiteTerm) -> Result<()> {
        self.check_term(&t)?;
        self.terms.push(t);
        Ok(())
    }

    pub fn extend(&mut self, other: &GaussianExpansion) -> Result<()> {
        for t in &other.terms {
            self.push(t.clone())?;
        }
        Ok(())
    }

    /// An empty expansion with the same metadata.
    pub fn empty_like(&self) -> Self {
        Self::new(self.n_electrons, self.degree_cap)
    }

    pub fn with_terms(&self, terms: Vec<GaussHermiteTerm>) -> Result<Self> {
        Self::from_terms(self.n_electrons, self.degree_cap, terms)
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut e = self.clone();
        for t in &mut e.terms {
            t.coeff *= c;
        }
        e
    }

    /// `self + c * other`, concatenating the term lists.
    pub fn axpy(&self, c: f64, other: &GaussianExpansion) -> Result<Self> {
        let mut e = self.clone();
        e.extend(&other.scaled(c))?;
        Ok(e)
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(|t| t.degree()).max().unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Drop terms whose coefficient is exactly zero.
    pub fn drop_zeros(&self) -> Self {
        let mut e = self.empty_like();
        e.terms = self.terms.iter().filter(|t| t.coeff != 0.0 && !t.poly.is_empty()).cloned().collect();
        e
    }

    /// Individual `H1` norms of the terms.
    pub fn term_norms(&self) -> Result<Vec<f64>> {
        self.terms.par_iter().map(term_h1_norm).collect()
    }

    /// Drop the smallest-norm terms while their norms sum to at most `budget`.
    pub fn prune(&self, budget: f64) -> Result<Self> {
        if budget <= 0.0 {
            return Ok(self.clone());
        }
        let norms = self.term_norms()?;
        Ok(self.prune_with_norms(budget, &norms))
    }

    pub fn prune_with_norms(&self, budget: f64, norms: &[f64]) -> Self {
        if budget <= 0.0 {
            return self.clone();
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
        let mut dropped = vec![false; self.len()];
        let mut acc = 0.0;
        for &i in &order {
            if acc + norms[i] <= budget {
                acc += norms[i];
                dropped[i] = true;
            } else {
                break;
            }
        }
        let mut e = self.empty_like();
        e.terms = self
            .terms
            .iter()
            .zip(dropped)
            .filter(|(_, d)| !d)
            .map(|(t, _)| t.clone())
            .collect();
        e
    }

    fn pairwise(&self, other: &GaussianExpansion, f: fn(&GaussHermiteTerm, &GaussHermiteTerm) -> Result<f64>) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let rows: Vec<f64> = self
            .terms
            .par_iter()
            .map(|s| {
                let vals: Result<Vec<f64>> = other.terms.iter().map(|t| f(s, t)).collect();
                vals.map(|v| tree_sum(&v))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(tree_sum(&rows))
    }

    pub fn l2_inner(&self, other: &GaussianExpansion) -> Result<f64> {
        self.pairwise(other, l2_inner)
    }

    pub fn h1_semi_inner(&self, other: &GaussianExpansion) -> Result<f64> {
        self.pairwise(other, h1_semi_inner)
    }

    pub fn h2_semi_inner(&self, other: &GaussianExpansion) -> Result<f64> {
        self.pairwise(other, h2_semi_inner)
    }

    /// Inner product weighted by `(1 + |w|^2)^order` in Fourier space, `order` in {0, 1, 2}.
    pub fn sobolev_inner(&self, other: &GaussianExpansion, order: u32) -> Result<f64> {
        match order {
            0 => self.l2_inner(other),
            1 => Ok(self.l2_inner(other)? + self.h1_semi_inner(other)?),
            2 => Ok(self.l2_inner(other)? + 2.0 * self.h1_semi_inner(other)? + self.h2_semi_inner(other)?),
            _ => Err(Error::InvalidParameter(format!("sobolev order must be 0, 1 or 2, got {order}"))),
        }
    }

    pub fn norm(&self, order: u32) -> Result<f64> {
        Ok(self.sobolev_inner(self, order)?.max(0.0).sqrt())
    }

    pub fn h1_norm(&self) -> Result<f64> {
        self.norm(1)
    }

    /// Gram matrix of the individual terms under `f`.
    pub fn gram(&self, f: fn(&GaussHermiteTerm, &GaussHermiteTerm) -> Result<f64>) -> Result<DMatrix<f64>> {
        let n = self.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..=i).map(|j| f(&self.terms[i], &self.terms[j])).collect::<Result<Vec<f64>>>())
            .collect::<Result<_>>()?;
        let mut g = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.terms.iter().map(|t| t.coeff))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(c: f64) -> GaussHermiteTerm {
        GaussHermiteTerm::isotropic(c, &[0.0; 3], 1.0)
    }

    #[test]
    fn prune_examples() {
        let e = GaussianExpansion::from_terms(1, 4, vec![g(1.0), g(1e-9)]).unwrap();
        assert_eq!(e.prune(0.0).unwrap(), e);
        let p = e.prune(1e-6).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.terms[0].coeff, 1.0);
        let total: f64 = e.term_norms().unwrap().iter().sum();
        assert!(e.prune(total).unwrap().is_empty());
    }

    #[test]
    fn h1_norm_splits() {
        let e = GaussianExpansion::from_terms(1, 4, vec![g(1.0), GaussHermiteTerm::isotropic(-0.3, &[0.5, 0.0, 0.0], 2.0)])
            .unwrap();
        let n1 = e.sobolev_inner(&e, 1).unwrap();
        let n0 = e.sobolev_inner(&e, 0).unwrap();
        let s1 = e.h1_semi_inner(&e).unwrap();
        assert!((n1 - n0 - s1).abs() < 1e-12 * n1);
    }

    #[test]
    fn tree_sum_fixed_order() {
        let v: Vec<f64> = (0..37).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        assert_eq!(tree_sum(&v), tree_sum(&v.clone()));
        assert!((tree_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-14);
    }
}
