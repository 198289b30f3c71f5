use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

/// Coefficient ring for [`Poly`].
pub trait Coeff:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + From<f64>
    + Send
    + Sync
{
    fn is_zero(&self) -> bool;
    fn magnitude(&self) -> f64;
}

impl Coeff for f64 {
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Coeff for Complex64 {
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

pub type MultiIndex = Vec<u8>;

/// Sparse multivariate polynomial keyed by multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T: Coeff = f64> {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, T>,
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl<T: Coeff> Poly<T> {
    pub fn zero(dim: usize) -> Self {
        Self { dim, coeffs: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, T::from(1.0))
    }

    /// The coordinate `y_j`.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        let mut idx = vec![0u8; dim];
        idx[j] = 1;
        let mut p = Self::zero(dim);
        p.add_term(idx, T::from(1.0));
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, T)>) -> Self {
        let mut p = Self::zero(dim);
        for (idx, c) in terms {
            assert_eq!(idx.len(), dim, "multi-index length");
            p.add_term(idx, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &T)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add_term(&mut self, idx: MultiIndex, c: T) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(idx.clone()).or_insert_with(|| T::from(0.0));
        *entry = *entry + c;
        if entry.is_zero() {
            self.coeffs.remove(&idx);
        }
    }

    pub fn coeff(&self, idx: &[u8]) -> T {
        self.coeffs.get(idx).copied().unwrap_or_else(|| T::from(0.0))
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs
            .keys()
            .map(|k| k.iter().map(|&a| a as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// True for a nonzero constant stored under the zero multi-index only.
    pub fn is_constant(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs.keys().next().unwrap().iter().all(|&a| a == 0)
    }

    pub fn constant_term(&self) -> T {
        self.coeff(&vec![0; self.dim])
    }

    pub fn scale(&self, c: T) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, &v) in &self.coeffs {
            p.add_term(k.clone(), v * c);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (k, &v) in &other.coeffs {
            p.add_term(k.clone(), v);
        }
        p
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut p = Self::zero(self.dim);
        for (ka, &va) in &self.coeffs {
            for (kb, &vb) in &other.coeffs {
                let k: MultiIndex = ka.iter().zip(kb).map(|(a, b)| a + b).collect();
                p.add_term(k, va * vb);
            }
        }
        p
    }

    /// `d/dy_j`.
    pub fn derivative(&self, j: usize) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, &v) in &self.coeffs {
            if k[j] > 0 {
                let mut k2 = k.clone();
                let e = k2[j];
                k2[j] -= 1;
                p.add_term(k2, v * T::from(e as f64));
            }
        }
        p
    }

    /// `(sum_k l_k y_k) * P`.
    pub fn mul_linear(&self, l: &[T]) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, &v) in &self.coeffs {
            for (j, &lj) in l.iter().enumerate() {
                if lj.is_zero() {
                    continue;
                }
                let mut k2 = k.clone();
                k2[j] += 1;
                p.add_term(k2, v * lj);
            }
        }
        p
    }

    /// `P(y + s)` re-expanded in `y`.
    pub fn shift(&self, s: &[f64]) -> Self {
        if s.iter().all(|&x| x == 0.0) {
            return self.clone();
        }
        let mut p = Self::zero(self.dim);
        for (k, &v) in &self.coeffs {
            // expand prod_i (y_i + s_i)^{k_i}
            let mut partial: Vec<(MultiIndex, f64)> = vec![(vec![0; self.dim], 1.0)];
            for (i, &ki) in k.iter().enumerate() {
                if ki == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (ki as usize + 1));
                for (idx, c) in &partial {
                    for m in 0..=ki {
                        let f = binomial(ki as u32, m as u32) * s[i].powi((ki - m) as i32);
                        if f == 0.0 {
                            continue;
                        }
                        let mut idx2 = idx.clone();
                        idx2[i] = m;
                        next.push((idx2, c * f));
                    }
                }
                partial = next;
            }
            for (idx, c) in partial {
                p.add_term(idx, v * T::from(c));
            }
        }
        p
    }

    pub fn eval(&self, y: &[f64]) -> T {
        let mut acc = T::from(0.0);
        for (k, &v) in &self.coeffs {
            let mut m = 1.0;
            for (i, &e) in k.iter().enumerate() {
                if e > 0 {
                    m *= y[i].powi(e as i32);
                }
            }
            acc = acc + v * T::from(m);
        }
        acc
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().map(|c| c.magnitude()).fold(0.0, f64::max)
    }

    /// Drop coefficients with magnitude `<= tol`.
    pub fn chop(&self, tol: f64) -> Self {
        let mut p = Self::zero(self.dim);
        for (k, &v) in &self.coeffs {
            if v.magnitude() > tol {
                p.add_term(k.clone(), v);
            }
        }
        p
    }
}

impl Poly<f64> {
    pub fn to_complex(&self) -> Poly<Complex64> {
        Poly::from_terms(self.dim, self.coeffs.iter().map(|(k, &v)| (k.clone(), Complex64::new(v, 0.0))))
    }
}

impl Poly<Complex64> {
    /// Real part and the largest imaginary magnitude.
    pub fn real_part(&self) -> (Poly<f64>, f64) {
        let mut im = 0.0f64;
        let p = Poly::from_terms(
            self.dim,
            self.coeffs.iter().map(|(k, v)| {
                im = im.max(v.im.abs());
                (k.clone(), v.re)
            }),
        );
        (p, im)
    }
}

/// Total degree of a multi-index.
pub fn index_degree(idx: &[u8]) -> usize {
    idx.iter().map(|&a| a as usize).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_evaluation() {
        let p = Poly::<f64>::from_terms(2, [(vec![2, 1], 1.5), (vec![0, 0], -1.0), (vec![1, 0], 2.0)]);
        let s = [0.3, -1.2];
        let q = p.shift(&s);
        for y in [[0.1, 0.2], [-1.0, 2.0], [3.0, -0.5]] {
            let ys = [y[0] + s[0], y[1] + s[1]];
            assert!((q.eval(&y) - p.eval(&ys)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_and_product() {
        let x = Poly::<f64>::coordinate(2, 0);
        let y = Poly::<f64>::coordinate(2, 1);
        let p = x.mul(&x).mul(&y);
        assert_eq!(p.degree(), 3);
        let d = p.derivative(0);
        assert_eq!(d.coeff(&[1, 1]), 2.0);
    }

    #[test]
    fn zero_coefficients_are_not_stored() {
        let mut p = Poly::<f64>::one(3);
        p.add_term(vec![0, 0, 0], -1.0);
        assert!(p.is_empty());
        p.add_term(vec![1, 0, 0], 0.0);
        assert!(p.terms().all(|(k, _)| k != &vec![1, 0, 0]));
    }
}
