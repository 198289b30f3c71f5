//! Fixtures shared by the benchmarks.

use gausskern::gaussalg::GaussianExpansion;
use gausskern::operators::{MolecularSystem, OperatorConfig, RangeSpec};
use gausskern::random::TermGenerator;
use gausskern::GaussHermiteTerm;

pub fn hydrogen() -> MolecularSystem {
    MolecularSystem::atom(1, 1.0).expect("valid system")
}

/// Random three-dimensional expansion with `n` terms.
pub fn expansion(seed: u64, n: usize) -> GaussianExpansion {
    TermGenerator::new(seed).expansion3(n)
}

pub fn unit_gaussian() -> GaussianExpansion {
    GaussianExpansion::single(1, GaussHermiteTerm::isotropic(1.0, &[0.0; 3], 1.0)).expect("valid term")
}

/// Small operator configuration, `k` in `[-k, k]`.
pub fn operator(gamma: f64, k: i64) -> OperatorConfig {
    OperatorConfig::new(-1.0, gamma, 0.5, 0.25, &RangeSpec::default()).expect("valid config").with_range(-k, k)
}
