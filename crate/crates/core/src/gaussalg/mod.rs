//! Anisotropic Gauss-Hermite functions and their closed algebra.

mod expansion;
mod fourier;
mod inner;
pub mod io;
mod poly;
mod precision;
mod term;

pub use expansion::{tree_sum, GaussianExpansion, DEFAULT_DEGREE_CAP};
pub use fourier::{apply_gaussian_multiplier, fourier, inverse_fourier, FourierTerm};
pub use inner::{h1_semi_inner, h2_semi_inner, integral, l2_inner, term_h1_norm, Moments};
pub use poly::{index_degree, Coeff, MultiIndex, Poly};
pub use precision::{Factor, Precision};
pub use term::{derivative, gradient, laplacian, product, product_terms, times_square_norm, GaussFactor, GaussHermiteTerm};
