//! JSON-lines dump of expansions, one record per term.

use super::expansion::GaussianExpansion;
use super::poly::Poly;
use super::precision::Precision;
use super::term::GaussHermiteTerm;
use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrecisionRecord {
    pub structured: bool,
    pub lower: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonomialRecord {
    pub multi_index: Vec<u8>,
    pub coeff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRecord {
    pub coeff: f64,
    pub center: Vec<f64>,
    pub precision: PrecisionRecord,
    pub poly: Vec<MonomialRecord>,
}

impl From<&GaussHermiteTerm> for TermRecord {
    fn from(t: &GaussHermiteTerm) -> Self {
        TermRecord {
            coeff: t.coeff,
            center: t.center.iter().copied().collect(),
            precision: PrecisionRecord { structured: t.precision.is_structured(), lower: t.precision.lower_triangle() },
            poly: t.poly.terms().map(|(k, &c)| MonomialRecord { multi_index: k.clone(), coeff: c }).collect(),
        }
    }
}

impl TermRecord {
    pub fn to_term(&self) -> Result<GaussHermiteTerm> {
        let d = self.center.len();
        let precision = Precision::from_lower_triangle(self.precision.structured, &self.precision.lower)?;
        if precision.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: precision.dim() });
        }
        let mut poly = Poly::zero(d);
        for m in &self.poly {
            if m.multi_index.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.multi_index.len() });
            }
            poly.add_term(m.multi_index.clone(), m.coeff);
        }
        Ok(GaussHermiteTerm { coeff: self.coeff, center: DVector::from_vec(self.center.clone()), precision, poly })
    }
}

pub fn to_json_lines(e: &GaussianExpansion) -> Result<String> {
    let mut out = String::new();
    for t in &e.terms {
        let line = serde_json::to_string(&TermRecord::from(t)).map_err(|x| Error::Serialization(x.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_json_lines(s: &str, n_electrons: usize, degree_cap: usize) -> Result<GaussianExpansion> {
    let mut e = GaussianExpansion::new(n_electrons, degree_cap);
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TermRecord =
            serde_json::from_str(line).map_err(|x| Error::Serialization(format!("line {}: {x}", i + 1)))?;
        let t = rec.to_term()?;
        t.validate(degree_cap)?;
        e.push(t)?;
    }
    Ok(e)
}
