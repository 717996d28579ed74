//! Model persistence: canonical JSON with sorted keys, shortest
//! round-trip float formatting and a trailing newline, so serialising,
//! parsing and re-serialising a file is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use softsensor_core::data::{ColumnMapping, Variable};
use softsensor_core::forest::{ForestModel, HyperParams, TreeNode};
use softsensor_core::linear::LinearModel;
use softsensor_core::preprocess::{ScalingParams, TransformSpec};
use softsensor_core::Dataset64;

use crate::config::ModelKind;
use crate::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Linear {
        intercept: f64,
        /// Keyed by predictor name; the prediction-time column order comes
        /// from the file's `predictors` list.
        coefficients: BTreeMap<Variable, f64>,
    },
    Forest {
        trees: Vec<TreeNode<f64>>,
    },
}

/// Training provenance. Carries no wall-clock values — retraining with
/// identical inputs must reproduce the file byte for byte — so the
/// timestamps are the time range of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub dataset_sha256: String,
    pub n_training_rows: usize,
    pub data_start: String,
    pub data_end: String,
    pub target: Variable,
    /// Column mapping used at training time, so prediction inputs can be
    /// parsed the same way.
    pub mapping: ColumnMapping,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: String,
    pub predictors: Vec<Variable>,
    pub transform: TransformSpec,
    pub scaling: Option<ScalingParams<f64>>,
    pub payload: Payload,
    pub hyperparams: Option<HyperParams>,
    pub seed: u64,
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn from_linear(model: &LinearModel<f64>, seed: u64, metadata: Metadata) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Linear.as_str().into(),
            predictors: model.predictor_names.clone(),
            transform: model.transform.clone(),
            scaling: Some(model.scaling.clone()),
            payload: Payload::Linear {
                intercept: model.intercept,
                coefficients: model
                    .predictor_names
                    .iter()
                    .copied()
                    .zip(model.coefficients.iter().copied())
                    .collect(),
            },
            hyperparams: None,
            seed,
            metadata,
        }
    }

    pub fn from_forest(model: &ForestModel<f64>, metadata: Metadata) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Forest.as_str().into(),
            predictors: model.predictor_names.clone(),
            transform: TransformSpec::identity(),
            scaling: None,
            payload: Payload::Forest {
                trees: model.trees.clone(),
            },
            hyperparams: Some(model.hyperparams.clone()),
            seed: model.seed,
            metadata,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "unrecognised model format version {}",
                self.format_version
            )));
        }
        let p = self.predictors.len();
        match (self.kind.as_str(), &self.payload) {
            ("linear", Payload::Linear { coefficients, .. }) => {
                if coefficients.len() != p
                    || self.predictors.iter().any(|v| !coefficients.contains_key(v))
                {
                    return Err(CliError::usage(
                        "coefficients do not cover the predictor list",
                    ));
                }
                match &self.scaling {
                    None => {
                        return Err(CliError::usage(
                            "linear model file lacks scaling parameters",
                        ))
                    }
                    Some(s) if s.means.len() != p || s.sds.len() != p => {
                        return Err(CliError::usage(
                            "scaling parameters do not cover the predictor columns",
                        ))
                    }
                    Some(_) => {}
                }
            }
            ("forest", Payload::Forest { trees }) => {
                let hp = self.hyperparams.as_ref().ok_or_else(|| {
                    CliError::usage("forest model file lacks hyperparameters")
                })?;
                if trees.len() != hp.n_trees {
                    return Err(CliError::usage(format!(
                        "{} trees stored but hyperparameters say {}",
                        trees.len(),
                        hp.n_trees
                    )));
                }
                if trees.iter().any(|t| max_feature_index(t) >= p) {
                    return Err(CliError::usage(
                        "tree references a feature beyond the predictor list",
                    ));
                }
            }
            _ => {
                return Err(CliError::usage(format!(
                    "model kind '{}' does not match its payload",
                    self.kind
                )))
            }
        }
        Ok(())
    }

    pub fn model_kind(&self) -> CliResult<ModelKind> {
        self.kind.parse()
    }

    pub fn to_linear(&self) -> CliResult<LinearModel<f64>> {
        match (&self.payload, &self.scaling) {
            (
                Payload::Linear {
                    intercept,
                    coefficients,
                },
                Some(scaling),
            ) => {
                let ordered: Vec<f64> = self
                    .predictors
                    .iter()
                    .map(|v| {
                        coefficients.get(v).copied().ok_or_else(|| {
                            CliError::usage(format!("no coefficient for predictor {v}"))
                        })
                    })
                    .collect::<CliResult<_>>()?;
                Ok(LinearModel {
                    predictor_names: self.predictors.clone(),
                    intercept: *intercept,
                    coefficients: ordered,
                    transform: self.transform.clone(),
                    scaling: scaling.clone(),
                })
            }
            _ => Err(CliError::usage("model file does not hold a linear model")),
        }
    }

    pub fn to_forest(&self) -> CliResult<ForestModel<f64>> {
        match (&self.payload, &self.hyperparams) {
            (Payload::Forest { trees }, Some(hp)) => Ok(ForestModel {
                trees: trees.clone(),
                hyperparams: hp.clone(),
                predictor_names: self.predictors.clone(),
                seed: self.seed,
            }),
            _ => Err(CliError::usage("model file does not hold a forest model")),
        }
    }

    /// Predict a dataset carrying the raw predictor columns.
    pub fn predict_dataset(&self, d: &Dataset64) -> CliResult<Vec<f64>> {
        match self.model_kind()? {
            ModelKind::Linear => self.to_linear()?.predict_dataset(d).map_err(CliError::Core),
            ModelKind::Forest => self.to_forest()?.predict_dataset(d).map_err(CliError::Core),
        }
    }

    /// Human-readable model descriptor for reports.
    pub fn descriptor(&self) -> String {
        format!(
            "{} {} ~ {}",
            self.kind,
            self.metadata.target,
            self.predictors
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join("+")
        )
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        self.validate()?;
        std::fs::write(path, to_canonical_json(self)?)
            .map_err(|e| CliError::Core(softsensor_core::Error::Io(e)))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::usage(format!("cannot read model {}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::usage(format!("invalid model file {}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }
}

/// Largest feature index referenced anywhere in a tree (0 for pure leaves).
fn max_feature_index(node: &TreeNode<f64>) -> usize {
    match node {
        TreeNode::Leaf { .. } => 0,
        TreeNode::Internal {
            feature,
            left,
            right,
            ..
        } => (*feature)
            .max(max_feature_index(left))
            .max(max_feature_index(right)),
    }
}

/// Canonical JSON bytes: keys sorted (via `serde_json::Value`'s ordered
/// maps), two-space indentation, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let v = serde_json::to_value(value)
        .map_err(|e| CliError::numeric(format!("serialisation failed: {e}")))?;
    let mut bytes = serde_json::to_vec_pretty(&v)
        .map_err(|e| CliError::numeric(format!("serialisation failed: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// SHA-256 of a file, hex-encoded; binds a model to its training data.
pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::usage(format!("cannot hash dataset {}: {e}", path.display()))
    })?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_metadata() -> Metadata {
        use softsensor_core::data::ColumnSpec;
        Metadata {
            dataset_sha256: "abc".into(),
            n_training_rows: 10,
            data_start: "2010-01-01T00:00:00".into(),
            data_end: "2010-01-02T00:00:00".into(),
            target: Variable::Trp,
            mapping: ColumnMapping::new(
                "Timestamp",
                vec![
                    ColumnSpec {
                        variable: Variable::Ec,
                        source_header: "EC".into(),
                        unit: "uS/cm".into(),
                    },
                    ColumnSpec {
                        variable: Variable::Trp,
                        source_header: "TRP".into(),
                        unit: "mg P/l".into(),
                    },
                ],
            )
            .unwrap(),
            config: BTreeMap::from([("seed".to_string(), "1".to_string())]),
        }
    }

    #[test]
    fn canonical_json_round_trip_is_byte_identical() {
        let model = LinearModel {
            predictor_names: vec![Variable::Ec, Variable::Flow],
            intercept: 0.1234567890123,
            coefficients: vec![1.0 / 3.0, -2.0 / 7.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![486.53, 0.97],
                sds: vec![79.64, 1.32],
            },
        };
        let file = ModelFile::from_linear(&model, 42, toy_metadata());
        let first = to_canonical_json(&file).unwrap();
        let parsed: ModelFile = serde_json::from_slice(&first).unwrap();
        let second = to_canonical_json(&parsed).unwrap();
        assert_eq!(first, second);
        assert_eq!(file, parsed);
    }

    #[test]
    fn keys_are_sorted_in_output() {
        let model = LinearModel {
            predictor_names: vec![Variable::Ec],
            intercept: 1.0,
            coefficients: vec![2.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![0.0],
                sds: vec![1.0],
            },
        };
        let file = ModelFile::from_linear(&model, 0, toy_metadata());
        let text = String::from_utf8(to_canonical_json(&file).unwrap()).unwrap();
        let fv = text.find("\"format_version\"").unwrap();
        let kind = text.find("\"kind\"").unwrap();
        let seed = text.find("\"seed\"").unwrap();
        assert!(fv < kind && kind < seed);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn kind_payload_mismatch_is_rejected() {
        let model = LinearModel {
            predictor_names: vec![Variable::Ec],
            intercept: 1.0,
            coefficients: vec![2.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![0.0],
                sds: vec![1.0],
            },
        };
        let mut file = ModelFile::from_linear(&model, 0, toy_metadata());
        file.kind = "forest".into();
        assert!(file.validate().is_err());
        file.kind = "linear".into();
        file.format_version = 99;
        assert!(file.validate().is_err());
    }

    #[test]
    fn structural_invariants_are_enforced_on_files() {
        let model = LinearModel {
            predictor_names: vec![Variable::Ec, Variable::Flow],
            intercept: 1.0,
            coefficients: vec![2.0, 3.0],
            transform: TransformSpec::identity(),
            scaling: ScalingParams {
                means: vec![0.0, 0.0],
                sds: vec![1.0, 1.0],
            },
        };
        let mut file = ModelFile::from_linear(&model, 0, toy_metadata());
        assert!(file.validate().is_ok());
        if let Payload::Linear { coefficients, .. } = &mut file.payload {
            coefficients.remove(&Variable::Flow);
        }
        assert!(file.validate().is_err());

        // Forest: stored tree count must match the hyperparameters and
        // feature indices must stay within the predictor list.
        let tree = TreeNode::Internal {
            feature: 0,
            threshold: 1.0,
            left: Box::new(TreeNode::Leaf {
                value: 0.0,
                n: 1,
                mse: 0.0,
            }),
            right: Box::new(TreeNode::Leaf {
                value: 1.0,
                n: 1,
                mse: 0.0,
            }),
        };
        let hp = softsensor_core::forest::HyperParams {
            bootstrap: false,
            feature_subset_rule: softsensor_core::forest::FeatureSubsetRule::All,
            max_depth: 2,
            min_samples_split: 2,
            min_samples_leaf: 1,
            n_trees: 2,
            seed: 0,
        };
        let forest = ForestModel {
            trees: vec![tree.clone(), tree],
            hyperparams: hp,
            predictor_names: vec![Variable::Ec],
            seed: 0,
        };
        let mut file = ModelFile::from_forest(&forest, toy_metadata());
        assert!(file.validate().is_ok());
        if let Payload::Forest { trees } = &mut file.payload {
            trees.pop();
        }
        assert!(file.validate().is_err());
        if let Payload::Forest { trees } = &mut file.payload {
            trees.push(TreeNode::Internal {
                feature: 7, // out of range for one predictor
                threshold: 0.0,
                left: Box::new(TreeNode::Leaf {
                    value: 0.0,
                    n: 1,
                    mse: 0.0,
                }),
                right: Box::new(TreeNode::Leaf {
                    value: 0.0,
                    n: 1,
                    mse: 0.0,
                }),
            });
        }
        assert!(file.validate().is_err());
    }
}
