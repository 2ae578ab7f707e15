//! Config-driven experiment description: dataset source, reduction, circuit
//! shape, split, training and mitigation settings. All randomness is seeded
//! explicitly in the config; there are no wall-clock defaults.

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, ScaleTarget, Splits};
use crate::error::{Error, Result};
use crate::mitigate::{DropoutMode, SelectionMetric, SoftDropoutPolicy};
use crate::model::{AncillaRotation, BlockType, Encoding, PoolingKind};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Csv {
        path: String,
        label_column: String,
    },
    Synthetic {
        n_per_class: usize,
        k: usize,
        separation: f64,
        noise_sd: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    None,
    Pca {
        d: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
    #[serde(default)]
    pub merge_test_into_train: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AncillaSpec {
    pub rotation: AncillaRotation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    #[default]
    Default,
    Policies(Vec<SoftDropoutPolicy>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationSpec {
    Dropout {
        mode: DropoutMode,
        fraction: f64,
        trials: usize,
        seed: u64,
    },
    SoftDropout {
        #[serde(default)]
        grid: GridSpec,
        #[serde(default = "default_selection_metric")]
        selection_metric: SelectionMetric,
    },
}

fn default_selection_metric() -> SelectionMetric {
    SelectionMetric::ValidationAccuracy
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub reduction: Reduction,
    pub encoding: Encoding,
    pub n_qubits: usize,
    pub block_type: BlockType,
    #[serde(default)]
    pub pooling_kind: PoolingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancilla: Option<AncillaSpec>,
    pub split: SplitSpec,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<MitigationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate_shape()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(Error::Argument(format!(
                "n_qubits must be at least 2, got {}",
                self.n_qubits
            )));
        }
        if let Reduction::Pca { d } = self.reduction {
            if d == 0 {
                return Err(Error::Argument("pca component count must be positive".into()));
            }
        }
        Ok(())
    }

    /// Check the feature count against the encoding before any compute.
    pub fn check_feature_count(&self, count: usize) -> Result<()> {
        match self.encoding {
            Encoding::Qubit => {
                if count != self.n_qubits {
                    return Err(Error::Argument(format!(
                        "qubit encoding requires feature count ({count}) to equal n_qubits ({})",
                        self.n_qubits
                    )));
                }
            }
            Encoding::Amplitude => {
                let cap = 1usize << self.n_qubits;
                if count == 0 || count > cap {
                    return Err(Error::Argument(format!(
                        "amplitude encoding on {} qubits takes 1..={cap} features, got {count}",
                        self.n_qubits
                    )));
                }
            }
        }
        Ok(())
    }

    /// Load or generate the dataset, reduce, scale for the encoding, split.
    pub fn prepare_splits(&self) -> Result<Splits> {
        let raw: Dataset = match &self.dataset {
            DatasetSource::Csv { path, label_column } => {
                data::load_csv(std::path::Path::new(path), label_column)?
            }
            DatasetSource::Synthetic {
                n_per_class,
                k,
                separation,
                noise_sd,
                seed,
            } => data::synth_gaussians(*n_per_class, *k, *separation, *noise_sd, *seed)?,
        };

        let reduced = match self.reduction {
            Reduction::None => raw.features.clone(),
            Reduction::Pca { d } => {
                let t = data::pca_fit(&raw.features, d)?;
                data::pca_apply(&t, &raw.features)?
            }
        };
        let count = reduced.first().map_or(0, Vec::len);
        self.check_feature_count(count)?;

        let target = match self.encoding {
            Encoding::Qubit => ScaleTarget::QubitEncoding,
            Encoding::Amplitude => ScaleTarget::AmplitudeEncoding,
        };
        let scaled = data::scale_features(&reduced, target)?;
        let dataset = Dataset::new(scaled, raw.labels)?;
        data::split(
            &dataset,
            (
                self.split.ratios[0],
                self.split.ratios[1],
                self.split.ratios[2],
            ),
            self.split.seed,
            self.split.stratified,
            self.split.merge_test_into_train,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_config_json() -> String {
        r#"{
            "dataset": { "synthetic": { "n_per_class": 20, "k": 4, "separation": 6.0, "noise_sd": 1.0, "seed": 1 } },
            "encoding": "qubit",
            "n_qubits": 4,
            "block_type": "ry_6",
            "split": { "ratios": [0.6, 0.2, 0.2], "seed": 2 },
            "train": { "iterations": 1, "seed": 3 }
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_synthetic_config_with_defaults() {
        let cfg = ExperimentConfig::from_json(&synthetic_config_json()).unwrap();
        assert_eq!(cfg.pooling_kind, PoolingKind::CrzCrx);
        assert_eq!(cfg.train.batch_size, 25);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert!(cfg.mitigation.is_none());
    }

    #[test]
    fn missing_seed_is_a_parse_error() {
        let bad = synthetic_config_json().replace(r#""seed": 3"#, r#""unused": 3"#);
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Parse(_))));
    }

    #[test]
    fn qubit_encoding_feature_mismatch_is_rejected() {
        let bad = synthetic_config_json().replace(r#""n_qubits": 4"#, r#""n_qubits": 5"#);
        let cfg = ExperimentConfig::from_json(&bad).unwrap();
        let err = cfg.prepare_splits().unwrap_err();
        match err {
            Error::Argument(msg) => assert!(msg.contains("n_qubits"), "{msg}"),
            other => panic!("expected argument error, got {other:?}"),
        }
    }

    #[test]
    fn prepare_splits_runs_and_scales_for_qubit_encoding() {
        let cfg = ExperimentConfig::from_json(&synthetic_config_json()).unwrap();
        let splits = cfg.prepare_splits().unwrap();
        assert_eq!(
            splits.train.len() + splits.test.len() + splits.validation.len(),
            40
        );
        for row in &splits.train.features {
            for &v in row {
                assert!((0.0..=std::f64::consts::PI).contains(&v));
            }
        }
    }

    #[test]
    fn merge_flag_inflates_training_set() {
        let json = synthetic_config_json().replace(
            r#""seed": 2 }"#,
            r#""seed": 2, "merge_test_into_train": true }"#,
        );
        let cfg = ExperimentConfig::from_json(&json).unwrap();
        let splits = cfg.prepare_splits().unwrap();
        assert_eq!(splits.train.len(), 24 + 8);
    }
}
