//! Independent numerical checks by direct quadrature.

pub mod checks;
pub mod fourier;
pub mod quad;
pub mod suite;

pub use checks::InequalityCheck;
pub use fourier::{FourierQuadOptions, Transform3};
pub use quad::{quad3d, QuadResult, QuadratureGrid, Rule, SphereRule, Term3};
pub use suite::{validate, CheckSummary, Suite, SuiteReport, SuiteSize};
