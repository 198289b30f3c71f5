//! Gaussian-expansion kernels for the electronic Schroedinger equation.
//!
//! Exponential-sum approximations of Coulomb kernels, an algebra of anisotropic
//! Gauss-Hermite functions, the split operators with their contraction constants,
//! a scheduled Neumann-series solver and an approximate inverse iteration.
//! Energies are in units where the kinetic term is `-Laplace` without the factor 1/2.

pub mod eigensolver;
pub mod error;
pub mod expsum;
pub mod gaussalg;
pub mod operators;
pub mod oracle;
pub mod random;
pub mod solver;

pub use error::{Error, Result};
pub use gaussalg::{GaussFactor, GaussHermiteTerm, GaussianExpansion, Poly, Precision};
