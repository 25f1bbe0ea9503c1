use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Row, TreeNode};
use super::{majority_vote, Prediction, TieRule};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Normalizer, WindowingConfig};
use crate::mcd::McdConfig;

pub const SCHEMA_VERSION: &str = "1";
pub const SUPPORTED_VERSIONS: &[&str] = &[SCHEMA_VERSION];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window_s: f64,
    pub step_s: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_level: Option<f64>,
    #[serde(default)]
    pub tie_rule: TieRule,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "one")]
    pub min_leaf: usize,
}

fn one() -> usize {
    1
}

/// A trained ensemble together with everything needed to turn raw samples
/// into decisions: channel, windowing, MCD coverage and the frozen
/// normalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaggedModel {
    pub version: String,
    pub seed: u64,
    pub ensemble_size: usize,
    pub channel_name: String,
    pub normalizer: Normalizer,
    pub config: ModelConfig,
    /// Free-form settings recorded by the producer (e.g. CLI flags).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
    pub trees: Vec<TreeNode>,
}

impl BaggedModel {
    pub fn windowing(&self) -> WindowingConfig {
        WindowingConfig {
            window_s: self.config.window_s,
            step_s: self.config.step_s,
        }
    }

    pub fn mcd(&self) -> McdConfig {
        McdConfig {
            alpha: self.config.alpha,
            quantile_level: self.config.quantile_level,
        }
    }

    /// Votes of every tree on an already-normalized row.
    pub fn votes(&self, row: &Row) -> Vec<u8> {
        self.trees.iter().map(|t| t.predict(row)).collect()
    }

    pub fn predict_normalized(&self, row: &Row) -> Prediction {
        majority_vote(&self.votes(row), self.config.tie_rule)
    }

    /// Normalizes a raw feature row with the frozen bounds, then votes.
    pub fn predict(&self, row: &FeatureVector) -> Prediction {
        self.predict_normalized(&self.normalizer.apply(&row.values()))
    }

    pub fn predict_batch(&self, rows: &[FeatureVector]) -> Vec<Prediction> {
        rows.par_iter().map(|r| self.predict(r)).collect()
    }

    /// Compact JSON followed by a newline. Floats are written in their
    /// shortest exact round-trip form.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)
            .map_err(|e| Error::MalformedModel(format!("cannot serialize model: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }

    /// Parses and validates a model document. Nothing is returned unless the
    /// whole document is well-formed.
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        // Unpruned trees can nest deeper than serde_json's default limit.
        de.disable_recursion_limit();
        let value = serde_json::Value::deserialize(&mut de)
            .and_then(|v| de.end().map(|_| v))
            .map_err(|e| Error::MalformedModel(e.to_string()))?;

        let version = match value.get("version") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(other) => other.to_string(),
            None => return Err(Error::MalformedModel("missing \"version\"".into())),
        };
        if !SUPPORTED_VERSIONS.contains(&version.as_str()) {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: SUPPORTED_VERSIONS.iter().map(|s| s.to_string()).collect(),
            });
        }
        let model: BaggedModel =
            serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::MalformedModel("model has no trees".into()));
        }
        if self.trees.len() != self.ensemble_size {
            return Err(Error::MalformedModel(format!(
                "ensemble_size {} but {} trees",
                self.ensemble_size,
                self.trees.len()
            )));
        }
        self.normalizer.validate()?;
        McdConfig::new(self.config.alpha).map_err(|e| Error::MalformedModel(e.to_string()))?;
        for tree in &self.trees {
            tree.validate()?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_bytes()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> BaggedModel {
        BaggedModel {
            version: SCHEMA_VERSION.into(),
            seed: 42,
            ensemble_size: 1,
            channel_name: "TP7".into(),
            normalizer: Normalizer {
                min: [0.0; 4],
                max: [1.0; 4],
            },
            config: ModelConfig {
                window_s: 2.0,
                step_s: 0.5,
                alpha: 0.5,
                quantile_level: None,
                tie_rule: TieRule::Alert,
                max_depth: None,
                min_leaf: 1,
            },
            provenance: BTreeMap::new(),
            trees: vec![TreeNode::Split {
                feature: 2,
                threshold: 0.1 + 0.2,
                left: Box::new(TreeNode::Leaf {
                    class: 0,
                    counts: [3, 1],
                }),
                right: Box::new(TreeNode::Leaf {
                    class: 1,
                    counts: [0, 5],
                }),
            }],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = tiny_model();
        let bytes = m.to_json_bytes().unwrap();
        let back = BaggedModel::from_json_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json_bytes().unwrap(), bytes);
    }

    #[test]
    fn truncated_document_is_rejected() {
        let bytes = tiny_model().to_json_bytes().unwrap();
        let err = BaggedModel::from_json_bytes(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::MalformedModel(_)));
    }

    #[test]
    fn unknown_version_lists_supported() {
        let mut v: serde_json::Value =
            serde_json::from_slice(&tiny_model().to_json_bytes().unwrap()).unwrap();
        v["version"] = serde_json::Value::String("99".into());
        let err = BaggedModel::from_json_bytes(v.to_string().as_bytes()).unwrap_err();
        match &err {
            Error::UnsupportedVersion { found, supported } => {
                assert_eq!(found, "99");
                assert_eq!(supported, &vec!["1".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("supported: 1"));
    }

    #[test]
    fn out_of_range_feature_is_rejected() {
        let mut m = tiny_model();
        if let TreeNode::Split { feature, .. } = &mut m.trees[0] {
            *feature = 7;
        }
        let bytes = serde_json::to_vec(&m).unwrap();
        let err = BaggedModel::from_json_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("feature index 7"));
    }

    #[test]
    fn tree_count_must_match() {
        let mut m = tiny_model();
        m.ensemble_size = 3;
        let bytes = serde_json::to_vec(&m).unwrap();
        assert!(BaggedModel::from_json_bytes(&bytes).is_err());
    }

    #[test]
    fn predict_applies_normalizer() {
        let m = tiny_model();
        let fv = |variance| FeatureVector {
            robust_scale: 0.0,
            robust_location: 0.0,
            variance,
            autocovariance: 0.0,
            window_start_s: 0.0,
        };
        // variance 0.5 normalizes to 0.0 < 0.3; variance 0.9 to 0.8.
        assert_eq!(m.predict(&fv(0.5)).label, 0);
        assert_eq!(m.predict(&fv(0.9)).label, 1);
    }
}
