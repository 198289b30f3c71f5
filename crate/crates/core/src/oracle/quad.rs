use crate::error::{Error, Result};
use crate::gaussalg::{tree_sum, GaussHermiteTerm, Poly};
use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Midpoint,
    GaussLegendre,
}

/// Nodes and weights of a rule on `[a, b]`.
pub fn nodes_1d(rule: Rule, n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    match rule {
        Rule::Midpoint => {
            let w = (b - a) / n as f64;
            (0..n).map(|i| (a + (i as f64 + 0.5) * w, w)).collect()
        }
        Rule::GaussLegendre => {
            let q = GaussLegendre::new(n.max(2).try_into().expect("n >= 2"));
            let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
            q.iter().map(|(x, w)| (m + r * x, r * w)).collect()
        }
    }
}

/// Tensor grid on the box `[-L, L]^3` mapped by `x = center + frame z`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub half_width: f64,
    pub n: usize,
    pub rule: Rule,
    pub center: Vector3<f64>,
    pub frame: Matrix3<f64>,
}

impl QuadratureGrid {
    pub fn new(half_width: f64, n: usize, rule: Rule) -> Result<Self> {
        if !(half_width > 0.0) || n < 8 {
            return Err(Error::InvalidParameter(format!("need L > 0 and n >= 8, got L = {half_width}, n = {n}")));
        }
        Ok(Self { half_width, n, rule, center: Vector3::zeros(), frame: Matrix3::identity() })
    }

    /// Frame in which `(x - c) . q (x - c) = |z|^2`.
    pub fn whitened(center: &DVector<f64>, q: &DMatrix<f64>, half_width: f64, n: usize) -> Result<Self> {
        let l = q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let linv_t = l.transpose().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let mut g = Self::new(half_width, n, Rule::GaussLegendre)?;
        g.center = Vector3::new(center[0], center[1], center[2]);
        g.frame = Matrix3::from_fn(|i, j| linv_t[(i, j)]);
        Ok(g)
    }

    pub fn refined(&self) -> Self {
        Self { n: 2 * self.n, ..self.clone() }
    }
}

/// Single-pass tensor quadrature.
pub fn integrate3(f: &(dyn Fn(&[f64; 3]) -> f64 + Sync), grid: &QuadratureGrid) -> Result<f64> {
    let nodes = nodes_1d(grid.rule, grid.n, -grid.half_width, grid.half_width);
    let jac = grid.frame.determinant().abs();
    let rows: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|&(z0, w0)| {
            let mut vals = Vec::with_capacity(nodes.len() * nodes.len());
            for &(z1, w1) in &nodes {
                for &(z2, w2) in &nodes {
                    let x = grid.center + grid.frame * Vector3::new(z0, z1, z2);
                    let v = f(&[x[0], x[1], x[2]]);
                    if !v.is_finite() {
                        return Err(Error::Quadrature(format!("non-finite sample at {:?}", [x[0], x[1], x[2]])));
                    }
                    vals.push(w0 * w1 * w2 * v);
                }
            }
            Ok(tree_sum(&vals))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(jac * tree_sum(&rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub coarse: f64,
    /// `|value - coarse| / max(|value|, tiny)`
    pub rel_change: f64,
}

/// Tensor quadrature on `grid` and on the grid with `2n` points per axis.
pub fn quad3d(f: &(dyn Fn(&[f64; 3]) -> f64 + Sync), grid: &QuadratureGrid) -> Result<QuadResult> {
    let coarse = integrate3(f, grid)?;
    let value = integrate3(f, &grid.refined())?;
    let rel_change = (value - coarse).abs() / value.abs().max(f64::MIN_POSITIVE);
    Ok(QuadResult { value, coarse, rel_change })
}

/// Gauss-Legendre rule on `[0, R]` in the variable `u` with `r = R u^p`.
pub fn mapped_radial(radius: f64, power: f64, n: usize) -> Vec<(f64, f64)> {
    nodes_1d(Rule::GaussLegendre, n, 0.0, 1.0)
        .into_iter()
        .map(|(u, w)| (radius * u.powf(power), w * radius * power * u.powf(power - 1.0)))
        .collect()
}

/// `int_0^R f(r) dr` with the mapped rule.
pub fn radial_integral(f: impl Fn(f64) -> f64, radius: f64, power: f64, n: usize) -> f64 {
    let vals: Vec<f64> = mapped_radial(radius, power, n).into_iter().map(|(r, w)| w * f(r)).collect();
    tree_sum(&vals)
}

/// Product rule on the unit sphere: Gauss-Legendre in `cos(theta)`, trapezoid in `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let mut dirs = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let dphi = 2.0 * PI / n_phi as f64;
        for (c, w) in nodes_1d(Rule::GaussLegendre, n_theta, -1.0, 1.0) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = (j as f64 + 0.5) * dphi;
                dirs.push([s * phi.cos(), s * phi.sin(), c]);
                weights.push(w * dphi);
            }
        }
        Self { dirs, weights }
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// A term in `R^3` laid out for fast pointwise evaluation straight from the definition.
#[derive(Debug, Clone)]
pub struct Term3 {
    coeff: f64,
    center: Vector3<f64>,
    q: Matrix3<f64>,
    poly: Vec<([i32; 3], f64)>,
}

impl Term3 {
    pub fn new(t: &GaussHermiteTerm) -> Result<Self> {
        if t.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, got: t.dim() });
        }
        let q = t.precision.to_dense();
        let poly: Poly = t.poly.clone();
        Ok(Self {
            coeff: t.coeff,
            center: Vector3::new(t.center[0], t.center[1], t.center[2]),
            q: Matrix3::from_fn(|i, j| q[(i, j)]),
            poly: poly.terms().map(|(k, &c)| ([k[0] as i32, k[1] as i32, k[2] as i32], c)).collect(),
        })
    }

    fn parts(&self, x: &[f64; 3]) -> (Vector3<f64>, Vector3<f64>, f64) {
        let y = Vector3::new(x[0], x[1], x[2]) - self.center;
        let qy = self.q * y;
        (y, qy, self.coeff * (-0.5 * y.dot(&qy)).exp())
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        let (y, _, g) = self.parts(x);
        g * self.poly.iter().map(|(k, c)| c * y[0].powi(k[0]) * y[1].powi(k[1]) * y[2].powi(k[2])).sum::<f64>()
    }

    pub fn grad(&self, x: &[f64; 3]) -> [f64; 3] {
        let (y, qy, g) = self.parts(x);
        let mut p = 0.0;
        let mut dp = [0.0; 3];
        for (k, c) in &self.poly {
            let m = [y[0].powi(k[0]), y[1].powi(k[1]), y[2].powi(k[2])];
            p += c * m[0] * m[1] * m[2];
            for j in 0..3 {
                if k[j] > 0 {
                    let mut d = c * k[j] as f64 * y[j].powi(k[j] - 1);
                    for i in 0..3 {
                        if i != j {
                            d *= m[i];
                        }
                    }
                    dp[j] += d;
                }
            }
        }
        [g * (dp[0] - p * qy[0]), g * (dp[1] - p * qy[1]), g * (dp[2] - p * qy[2])]
    }
}

/// Grid adapted to the product of two terms.
pub fn pair_grid(s: &GaussHermiteTerm, t: &GaussHermiteTerm, n: usize) -> Result<QuadratureGrid> {
    let qs = s.precision.to_dense();
    let qt = t.precision.to_dense();
    let q = &qs + &qt;
    let c = q.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&(&qs * &s.center + &qt * &t.center));
    QuadratureGrid::whitened(&c, &q, 12.0, n)
}

/// `(s, t)` by tensor quadrature.
pub fn quad_l2_inner(s: &GaussHermiteTerm, t: &GaussHermiteTerm, n: usize) -> Result<QuadResult> {
    let grid = pair_grid(s, t, n)?;
    let (a, b) = (Term3::new(s)?, Term3::new(t)?);
    quad3d(&|x: &[f64; 3]| a.eval(x) * b.eval(x), &grid)
}

/// `(grad s, grad t)` by tensor quadrature.
pub fn quad_h1_semi_inner(s: &GaussHermiteTerm, t: &GaussHermiteTerm, n: usize) -> Result<QuadResult> {
    let grid = pair_grid(s, t, n)?;
    let (ts, tt) = (Term3::new(s)?, Term3::new(t)?);
    quad3d(
        &|x: &[f64; 3]| {
            let a = ts.grad(x);
            let b = tt.grad(x);
            a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
        },
        &grid,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integrals() {
        let g = QuadratureGrid::new(8.0, 64, Rule::GaussLegendre).unwrap();
        let r = quad3d(&|x: &[f64; 3]| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), &g).unwrap();
        assert!((r.value - PI.powf(1.5)).abs() < 1e-10 * PI.powf(1.5));
        let r2 = quad3d(
            &|x: &[f64; 3]| {
                let s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                s * (-s).exp()
            },
            &g,
        )
        .unwrap();
        assert!((r2.value - 1.5 * PI.powf(1.5)).abs() < 1e-9 * PI.powf(1.5));
        let odd = quad3d(&|x: &[f64; 3]| x[0] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(), &g).unwrap();
        assert!(odd.value.abs() < 1e-14);
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(QuadratureGrid::new(1.0, 4, Rule::Midpoint).is_err());
    }

    #[test]
    fn sphere_area() {
        let s = SphereRule::new(8, 16);
        assert!((s.weights.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
    }
}
