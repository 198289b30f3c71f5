//! TOML run configuration.

use gausskern::eigensolver::{InverseIterationConfig, StepMode, Variant};
use gausskern::gaussalg::io::from_json_lines;
use gausskern::gaussalg::{GaussianExpansion, DEFAULT_DEGREE_CAP};
use gausskern::operators::{select_gamma, MolecularSystem, Nucleus, OperatorConfig, RangeSpec};
use gausskern::GaussHermiteTerm;
use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNucleus {
    #[serde(alias = "position")]
    pos: [f64; 3],
    #[serde(alias = "Z", alias = "z")]
    charge: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    lambda: Option<f64>,
    gamma: Option<f64>,
    h: Option<f64>,
    vartheta: Option<f64>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    tail_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    epsilon: Option<f64>,
    order: Option<f64>,
    allow_inadmissible: Option<bool>,
    residual: Option<bool>,
    reference_widen: Option<i64>,
    /// Right-hand side: a dump file, or an isotropic Gaussian at the centroid.
    f_path: Option<PathBuf>,
    f_coeff: Option<f64>,
    f_precision: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigen {
    mu: Option<f64>,
    variant: Option<Variant>,
    mode: Option<StepMode>,
    delta_tol: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    prune_budget: Option<f64>,
    h: Option<f64>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    tail_tol: Option<f64>,
    proxy_terms: Option<usize>,
    pool: Option<usize>,
    new_terms: Option<usize>,
    pivot_tol: Option<f64>,
    max_terms: Option<usize>,
    rate_data: Option<[f64; 2]>,
    initial_precision: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(alias = "N")]
    n_electrons: usize,
    nuclei: Vec<RawNucleus>,
    #[serde(default)]
    seed: u64,
    out: Option<PathBuf>,
    #[serde(default)]
    operator: RawOperator,
    #[serde(default)]
    solver: RawSolver,
    eigen: Option<RawEigen>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub order: f64,
    pub allow_inadmissible: bool,
    pub residual: bool,
    pub reference_widen: i64,
    pub f: GaussianExpansion,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: MolecularSystem,
    pub operator: OperatorConfig,
    /// True when `gamma` came from the admissibility rule rather than the file.
    pub gamma_selected: bool,
    pub solver: SolverSettings,
    pub eigen: InverseIterationConfig,
    pub initial_precision: f64,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

fn invalid(field: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{field}: {e}"))
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parse and validate; relative paths resolve against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
    let nuclei = raw.nuclei.iter().map(|n| Nucleus { position: n.pos, charge: n.charge }).collect();
    let system = MolecularSystem::new(raw.n_electrons, nuclei).map_err(|e| invalid("system", e))?;

    let o = &raw.operator;
    let d = RangeSpec::default();
    let range = RangeSpec {
        r_min: o.r_min.unwrap_or(d.r_min),
        r_max: o.r_max.unwrap_or(d.r_max),
        tail_tol: o.tail_tol.unwrap_or(d.tail_tol),
    };
    let s = &raw.solver;
    let order = s.order.unwrap_or(1.0);
    if !(order > 0.0 && order.is_finite()) {
        return Err(invalid("solver.order", format!("must be > 0, got {order}")));
    }
    // gamma is a placeholder until the selection below
    let placeholder = OperatorConfig::new(o.lambda.unwrap_or(-1.0), 0.5, o.h.unwrap_or(0.5), o.vartheta.unwrap_or(0.25), &range)
        .map_err(|e| invalid("operator", e))?;
    let (gamma, gamma_selected) = match o.gamma {
        Some(g) => (g, false),
        None => (select_gamma(&placeholder, &system, order).map_err(|e| invalid("operator.gamma", e))?.gamma, true),
    };
    let operator = placeholder.with_gamma(gamma).map_err(|e| invalid("operator.gamma", e))?;

    let epsilon = s.epsilon.unwrap_or(1e-2);
    if !(epsilon > 0.0) {
        return Err(invalid("solver.epsilon", format!("must be > 0, got {epsilon}")));
    }
    let f = match &s.f_path {
        Some(p) => {
            let p = base.join(p);
            let text = std::fs::read_to_string(&p).map_err(|e| invalid("solver.f_path", format!("{}: {e}", p.display())))?;
            from_json_lines(&text, system.n_electrons, DEFAULT_DEGREE_CAP).map_err(|e| invalid("solver.f_path", e))?
        }
        None => {
            let p = s.f_precision.unwrap_or(1.0);
            if !(p > 0.0) {
                return Err(invalid("solver.f_precision", format!("must be > 0, got {p}")));
            }
            centered_gaussian(&system, s.f_coeff.unwrap_or(1.0), p).map_err(|e| invalid("solver.f", e))?
        }
    };
    let solver = SolverSettings {
        epsilon,
        order,
        allow_inadmissible: s.allow_inadmissible.unwrap_or(false),
        residual: s.residual.unwrap_or(true),
        reference_widen: s.reference_widen.unwrap_or(4),
        f,
    };

    let explicit = raw.eigen.is_some();
    let e = raw.eigen.unwrap_or_default();
    let dflt = InverseIterationConfig::default();
    let eigen = InverseIterationConfig {
        mu: e.mu.unwrap_or(dflt.mu),
        variant: e.variant.unwrap_or(dflt.variant),
        mode: e.mode.unwrap_or(dflt.mode),
        delta_tol: e.delta_tol.unwrap_or(dflt.delta_tol),
        max_iter: e.max_iter.unwrap_or(dflt.max_iter),
        tol: e.tol.unwrap_or(dflt.tol),
        prune_budget: e.prune_budget.or(dflt.prune_budget),
        h: e.h.unwrap_or(dflt.h),
        range: RangeSpec {
            r_min: e.r_min.unwrap_or(dflt.range.r_min),
            r_max: e.r_max.unwrap_or(dflt.range.r_max),
            tail_tol: e.tail_tol.unwrap_or(dflt.range.tail_tol),
        },
        proxy_terms: e.proxy_terms.unwrap_or(dflt.proxy_terms),
        pool: e.pool.unwrap_or(dflt.pool),
        new_terms: e.new_terms.unwrap_or(dflt.new_terms),
        pivot_tol: e.pivot_tol.unwrap_or(dflt.pivot_tol),
        max_terms: e.max_terms.or(dflt.max_terms),
        rate_data: e.rate_data.map(|[a, b]| (a, b)),
    };
    // an absent section only matters to the eigen command, which validates on its own
    if explicit {
        eigen.validate(Some(system.theta())).map_err(|e| invalid("eigen", e))?;
    }
    let initial_precision = e.initial_precision.unwrap_or(1.0);
    if !(initial_precision > 0.0) {
        return Err(invalid("eigen.initial_precision", format!("must be > 0, got {initial_precision}")));
    }
    Ok(RunConfig {
        system,
        operator,
        gamma_selected,
        solver,
        eigen,
        initial_precision,
        out: raw.out.map(|p| base.join(p)),
        seed: raw.seed,
    })
}

/// `c exp(-p |x - centroid|^2 / 2)` in every electron coordinate.
fn centered_gaussian(sys: &MolecularSystem, c: f64, p: f64) -> gausskern::Result<GaussianExpansion> {
    let centroid = sys.centroid();
    let center: Vec<f64> = (0..sys.dim()).map(|i| centroid[i % 3]).collect();
    GaussianExpansion::single(sys.n_electrons, GaussHermiteTerm::isotropic(c, &center, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, CliError> {
        parse_str(s, Path::new("."))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse("N = 1\n[[nuclei]]\npos = [0, 0, 0]\nZ = 2\n").unwrap();
        assert_eq!(c.system.n_electrons, 1);
        assert_eq!(c.system.nuclei[0].charge, 2.0);
        assert!(c.gamma_selected && c.operator.gamma > 0.0 && c.operator.gamma < 1.0);
        assert_eq!(c.eigen, InverseIterationConfig::default());
        assert_eq!(c.solver.f.len(), 1);
    }

    #[test]
    fn rejects_bad_values() {
        let base = "N = 1\n[[nuclei]]\npos = [0, 0, 0]\nZ = 2\n";
        let e = parse(&format!("{base}[operator]\ngamma = 1.5\n")).unwrap_err();
        assert!(e.to_string().contains("gamma must lie in (0,1)"), "{e}");
        // theta = 4, so theta^2/8 = 2
        let e = parse(&format!("{base}[eigen]\nmu = 2.0\n")).unwrap_err();
        assert!(e.to_string().contains("must exceed theta^2/4"), "{e}");
        let e = parse(&format!("{base}bogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        assert!(parse("N = 0\nnuclei = []\n").is_err());
    }
}
