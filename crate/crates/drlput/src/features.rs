//! Request features: schema and per-request state.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSpec {
    pub name: String,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseSpec {
    pub name: String,
    pub dimension: usize,
}

/// Declares the shape of every request state: categorical id ranges, the
/// numerical vector, and fixed-length dense vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSchema {
    pub categorical: Vec<CategoricalSpec>,
    pub numerical: Vec<String>,
    pub dense: Vec<DenseSpec>,
}

impl FeatureSchema {
    pub fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = self
            .categorical
            .iter()
            .map(|c| c.name.as_str())
            .chain(self.numerical.iter().map(|s| s.as_str()))
            .chain(self.dense.iter().map(|d| d.name.as_str()))
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Schema("feature names must be unique".into()));
        }
        if let Some(c) = self.categorical.iter().find(|c| c.cardinality < 2) {
            return Err(Error::Schema(format!("categorical '{}' needs cardinality >= 2", c.name)));
        }
        if let Some(d) = self.dense.iter().find(|d| d.dimension < 1) {
            return Err(Error::Schema(format!("dense '{}' needs dimension >= 1", d.name)));
        }
        Ok(())
    }

    /// Stable content hash used to pair checkpoints with logs.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// The features of one ad request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestState {
    pub categorical: Vec<usize>,
    pub numerical: Vec<f64>,
    pub dense: Vec<Vec<f64>>,
}

impl RequestState {
    /// Checks lengths, cardinalities, and finiteness against a schema.
    pub fn check_against(&self, schema: &FeatureSchema) -> Result<()> {
        if self.categorical.len() != schema.categorical.len()
            || self.numerical.len() != schema.numerical.len()
            || self.dense.len() != schema.dense.len()
            || self.dense.iter().zip(&schema.dense).any(|(v, d)| v.len() != d.dimension)
        {
            return Err(Error::Schema("state shape does not match schema".into()));
        }
        for (id, spec) in self.categorical.iter().zip(&schema.categorical) {
            if *id >= spec.cardinality {
                return Err(Error::Schema(format!(
                    "categorical '{}' id {id} exceeds cardinality {}",
                    spec.name, spec.cardinality
                )));
            }
        }
        if self.numerical.iter().any(|v| !v.is_finite())
            || self.dense.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Schema("non-finite numerical feature".into()));
        }
        Ok(())
    }
}
