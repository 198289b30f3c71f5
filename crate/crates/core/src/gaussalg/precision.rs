use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Symmetric matrix acting on `R^d`, either dense or of the form `Q' (x) I_3`.
///
/// Structured matrices store the `N x N` factor `Q'`; coordinate `3 i + c` belongs
/// to electron `i`, component `c`.
#[derive(Debug, Clone, PartialEq)]
pub enum Precision {
    Dense(DMatrix<f64>),
    Structured(DMatrix<f64>),
}

/// Cholesky factor of a full `d x d` precision together with its log-determinant.
#[derive(Debug, Clone)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    pub log_det: f64,
}

impl Factor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(m).ok_or(Error::NotPositiveDefinite)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { chol, log_det })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn det(&self) -> f64 {
        self.log_det.exp()
    }

    /// Lower-triangular factor `L` with `Q = L L^T`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

pub(crate) fn kron_i3(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut out = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            let v = q[(i, j)];
            if v != 0.0 {
                for c in 0..3 {
                    out[(3 * i + c, 3 * j + c)] = v;
                }
            }
        }
    }
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl Precision {
    pub fn dense(m: DMatrix<f64>) -> Self {
        Precision::Dense(m)
    }

    pub fn structured(q: DMatrix<f64>) -> Self {
        Precision::Structured(q)
    }

    /// `c I_d`, kept structured when `d` is a multiple of 3.
    pub fn scalar(d: usize, c: f64) -> Self {
        if d % 3 == 0 {
            Precision::Structured(DMatrix::from_diagonal_element(d / 3, d / 3, c))
        } else {
            Precision::Dense(DMatrix::from_diagonal_element(d, d, c))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Precision::Dense(m) => m.nrows(),
            Precision::Structured(q) => 3 * q.nrows(),
        }
    }

    pub fn is_structured(&self) -> bool {
        matches!(self, Precision::Structured(_))
    }

    /// The stored matrix: full for dense, `Q'` for structured.
    pub fn stored(&self) -> &DMatrix<f64> {
        match self {
            Precision::Dense(m) | Precision::Structured(m) => m,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Precision::Dense(m) => m.clone(),
            Precision::Structured(q) => kron_i3(q),
        }
    }

    pub fn promote(&self) -> Precision {
        Precision::Dense(self.to_dense())
    }

    pub fn add(&self, other: &Precision) -> Precision {
        match (self, other) {
            (Precision::Structured(a), Precision::Structured(b)) => Precision::Structured(a + b),
            _ => Precision::Dense(self.to_dense() + other.to_dense()),
        }
    }

    pub fn scale(&self, c: f64) -> Precision {
        match self {
            Precision::Dense(m) => Precision::Dense(m * c),
            Precision::Structured(q) => Precision::Structured(q * c),
        }
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Precision::Dense(m) => m * v,
            Precision::Structured(q) => {
                let n = q.nrows();
                let mut out = DVector::zeros(3 * n);
                for i in 0..n {
                    for j in 0..n {
                        let qij = q[(i, j)];
                        if qij != 0.0 {
                            for c in 0..3 {
                                out[3 * i + c] += qij * v[3 * j + c];
                            }
                        }
                    }
                }
                out
            }
        }
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.mul_vec(v))
    }

    /// Entry `(i, j)` of the full matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self {
            Precision::Dense(m) => m[(i, j)],
            Precision::Structured(q) => {
                if i % 3 == j % 3 {
                    q[(i / 3, j / 3)]
                } else {
                    0.0
                }
            }
        }
    }

    pub fn factor(&self) -> Result<Factor> {
        Factor::new(self.to_dense())
    }

    /// `log det` of the full matrix.
    pub fn log_det(&self) -> Result<f64> {
        match self {
            Precision::Dense(m) => Ok(Factor::new(m.clone())?.log_det),
            Precision::Structured(q) => Ok(3.0 * Factor::new(q.clone())?.log_det),
        }
    }

    pub fn inverse(&self) -> Result<Precision> {
        let mut inv = Factor::new(self.stored().clone())?.inverse();
        symmetrize(&mut inv);
        Ok(match self {
            Precision::Dense(_) => Precision::Dense(inv),
            Precision::Structured(_) => Precision::Structured(inv),
        })
    }

    /// `(I + alpha Q)^{-1} Q` and `log det(I + alpha Q)`.
    pub fn multiplier(&self, alpha: f64) -> Result<(Precision, f64)> {
        let q = self.stored();
        let n = q.nrows();
        let ia = DMatrix::<f64>::identity(n, n) + q * alpha;
        let f = Factor::new(ia)?;
        let mut m = f.chol.solve(q);
        symmetrize(&mut m);
        Ok(match self {
            Precision::Dense(_) => (Precision::Dense(m), f.log_det),
            Precision::Structured(_) => (Precision::Structured(m), 3.0 * f.log_det),
        })
    }

    /// Add `alpha I` to the matrix.
    pub fn shift_identity(&self, alpha: f64) -> Precision {
        let q = self.stored();
        let n = q.nrows();
        let m = q + DMatrix::<f64>::identity(n, n) * alpha;
        match self {
            Precision::Dense(_) => Precision::Dense(m),
            Precision::Structured(_) => Precision::Structured(m),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.stored();
        let n = m.nrows();
        (0..n).all(|i| (0..i).all(|j| m[(i, j)] == m[(j, i)]))
    }

    /// Lower triangle, row-major.
    pub fn lower_triangle(&self) -> Vec<f64> {
        let m = self.stored();
        let n = m.nrows();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                out.push(m[(i, j)]);
            }
        }
        out
    }

    pub fn from_lower_triangle(structured: bool, lower: &[f64]) -> Result<Precision> {
        let n = ((((8 * lower.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        if n * (n + 1) / 2 != lower.len() {
            return Err(Error::Serialization(format!(
                "lower triangle of length {} is not triangular",
                lower.len()
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = lower.iter();
        for i in 0..n {
            for j in 0..=i {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(if structured { Precision::Structured(m) } else { Precision::Dense(m) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_determinant_is_cubed() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let p = Precision::Structured(q.clone());
        let dense = Precision::Dense(kron_i3(&q));
        assert!((p.log_det().unwrap() - dense.log_det().unwrap()).abs() < 1e-13);
    }

    #[test]
    fn multiplier_keeps_structure() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (m, _) = Precision::Structured(q).multiplier(0.7).unwrap();
        assert!(m.is_structured());
        assert!(m.is_symmetric());
    }

    #[test]
    fn mul_vec_matches_dense() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, -0.3, -0.3, 1.0]);
        let p = Precision::Structured(q);
        let v = DVector::from_iterator(6, (0..6).map(|i| i as f64 - 2.5));
        let a = p.mul_vec(&v);
        let b = p.to_dense() * &v;
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn lower_triangle_round_trip() {
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.2, 0.1, 3.0, 0.3, 0.2, 0.3, 4.0]);
        let p = Precision::Dense(q);
        let back = Precision::from_lower_triangle(false, &p.lower_triangle()).unwrap();
        assert_eq!(p, back);
    }
}
