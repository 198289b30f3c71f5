//! Seeded random Gauss-Hermite terms for tests and validation suites.

use crate::gaussalg::{GaussHermiteTerm, GaussianExpansion, Poly, Precision};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermSpec {
    pub center_box: f64,
    pub max_degree: usize,
    pub ridge: f64,
}

impl Default for TermSpec {
    fn default() -> Self {
        Self { center_box: 2.0, max_degree: 2, ridge: 0.1 }
    }
}

pub struct TermGenerator {
    rng: ChaCha8Rng,
    pub spec: TermSpec,
}

impl TermGenerator {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spec: TermSpec::default() }
    }

    pub fn with_spec(seed: u64, spec: TermSpec) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), spec }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// `A A^T + ridge I` with standard normal `A`.
    pub fn spd(&mut self, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let mut q = &a * a.transpose() + DMatrix::identity(d, d) * self.spec.ridge;
        for i in 0..d {
            for j in 0..i {
                q[(j, i)] = q[(i, j)];
            }
        }
        q
    }

    pub fn center(&mut self, d: usize) -> DVector<f64> {
        let b = self.spec.center_box;
        DVector::from_fn(d, |_, _| self.rng.random_range(-b..b))
    }

    pub fn poly(&mut self, d: usize, max_degree: usize) -> Poly {
        let deg = self.rng.random_range(0..=max_degree);
        let mut p = Poly::zero(d);
        p.add_term(vec![0; d], self.rng.random_range(-1.0..1.0));
        for _ in 0..deg.min(max_degree) * 2 {
            let mut idx = vec![0u8; d];
            let total = self.rng.random_range(1..=deg.max(1));
            for _ in 0..total {
                let j = self.rng.random_range(0..d);
                idx[j] += 1;
            }
            p.add_term(idx, self.rng.random_range(-1.0..1.0));
        }
        if p.is_empty() {
            p = Poly::one(d);
        }
        p
    }

    /// Term in `R^3` with a dense precision and a polynomial of degree `<= max_degree`.
    pub fn term3(&mut self) -> GaussHermiteTerm {
        let q = self.spd(3);
        let c = self.center(3);
        let coeff = self.rng.random_range(-1.0..1.0);
        let p = self.poly(3, self.spec.max_degree);
        GaussHermiteTerm::gaussian(coeff, c, Precision::dense(q)).with_poly(p)
    }

    /// Pure Gaussian in `R^3` with polynomial part 1.
    pub fn gaussian3(&mut self) -> GaussHermiteTerm {
        let q = self.spd(3);
        let c = self.center(3);
        let coeff = self.rng.random_range(-1.0..1.0);
        GaussHermiteTerm::gaussian(coeff, c, Precision::dense(q))
    }

    /// Pure Gaussian in `R^{3N}` with structured precision.
    pub fn structured_gaussian(&mut self, n: usize) -> GaussHermiteTerm {
        let q = self.spd(n);
        let c = self.center(3 * n);
        let coeff = self.rng.random_range(-1.0..1.0);
        GaussHermiteTerm::gaussian(coeff, c, Precision::structured(q))
    }

    pub fn expansion3(&mut self, len: usize) -> GaussianExpansion {
        let terms = (0..len).map(|_| self.term3()).collect();
        GaussianExpansion::from_terms(1, 4, terms).expect("generated terms respect the cap")
    }

    pub fn gaussian_expansion3(&mut self, len: usize) -> GaussianExpansion {
        let terms = (0..len).map(|_| self.gaussian3()).collect();
        GaussianExpansion::from_terms(1, 4, terms).expect("generated terms respect the cap")
    }
}
