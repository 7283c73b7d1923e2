//! Structured-text (TOML) domain description.
//!
//! ```toml
//! objective_column = "error"          # only used by table surrogates
//!
//! [[variables]]
//! name = "booster"
//! kind = "categorical"
//! levels = ["gbtree", "gblinear"]
//!
//! [[variables]]
//! name = "max_depth"
//! kind = "integer"
//! lo = 1
//! hi = 15
//!
//! [[variables]]
//! name = "eta"
//! kind = "continuous"
//! lo = 0.000979
//! hi = 0.995686
//!
//! [constraints]
//! cardinality = 2                     # Σ over all binary slots ≤ 2
//!
//! [[constraints.linear]]              # aᵀx ≤ b, one entry per binary slot
//! a = [1, 0, 1]
//! b = 1
//!
//! [[constraints.quadratic]]           # xᵀQx + qᵀx ≤ b, Q as dense rows
//! q_mat = [[0, 1, 0], [1, 0, 0], [0, 0, 0]]
//! q = [0, 0, 1]
//! b = 1
//! ```
//!
//! Binary slots follow declaration order; integer variables are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConstraintSet, MixedDomain, Origin, VariableKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariableSpec {
    Binary { name: String },
    Integer { name: String, lo: i64, hi: i64 },
    Categorical { name: String, levels: Vec<String> },
    Continuous { name: String, lo: f64, hi: f64 },
}

impl VariableSpec {
    pub fn name(&self) -> &str {
        match self {
            Self::Binary { name }
            | Self::Integer { name, .. }
            | Self::Categorical { name, .. }
            | Self::Continuous { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub q_mat: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
    #[serde(default)]
    pub linear: Vec<LinearSpec>,
    #[serde(default)]
    pub quadratic: Vec<QuadraticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_column: Option<String>,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub constraints: ConstraintSpec,
}

impl DomainSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<MixedDomain> {
        let mut b = MixedDomain::builder();
        for v in &self.variables {
            let kind = match v {
                VariableSpec::Binary { .. } => VariableKind::Binary,
                VariableSpec::Integer { lo, hi, .. } => VariableKind::Integer { lo: *lo, hi: *hi },
                VariableSpec::Categorical { levels, .. } => VariableKind::Categorical {
                    levels: levels.len(),
                },
                VariableSpec::Continuous { lo, hi, .. } => {
                    VariableKind::Continuous { lo: *lo, hi: *hi }
                }
            };
            b = b.variable(v.name(), kind);
        }
        let domain = b.build()?;
        let n = domain.d_disc();
        let mut cs = ConstraintSet::new(n);
        if let Some(k) = self.constraints.cardinality {
            cs.push_linear(vec![1.0; n], k as f64, Origin::User)?;
        }
        for l in &self.constraints.linear {
            cs.push_linear(l.a.clone(), l.b, Origin::User)?;
        }
        for q in &self.constraints.quadratic {
            if q.q_mat.len() != n || q.q_mat.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidDomain(format!(
                    "quadratic constraint matrix must be {n} x {n}"
                )));
            }
            cs.push_quadratic(q.q_mat.concat(), q.q.clone(), q.b)?;
        }
        domain.with_constraints(cs)
    }
}
