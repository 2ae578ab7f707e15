//! Command pipelines behind the CLI: each takes a parsed config plus any
//! command-specific options, does the work, and writes its artifacts under an
//! output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetSource, ExperimentConfig, GridSpec, MitigationSpec};
use crate::data::Splits;
use crate::error::{Error, Result};
use crate::mitigate::{
    self, drop_gate, dropout_trial_suite, soft_dropout_search, DropoutMode, DropoutReport,
    SearchReport, SelectionMetric, SoftDropoutPolicy,
};
use crate::model::{
    self, build_ancilla_model, build_model, LayerTag, ModelMetadata, ParamVector, QcnnModel,
};
use crate::report::{self, ReportRow};
use crate::train::{evaluate, train, Metrics, TrainHistory};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance record written next to every trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub train_seed: u64,
    pub split_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    pub metrics: Metrics,
    pub model_file: String,
}

pub fn build_model_from_config(cfg: &ExperimentConfig) -> Result<QcnnModel> {
    match &cfg.ancilla {
        Some(spec) => build_ancilla_model(
            cfg.n_qubits,
            cfg.encoding,
            cfg.block_type,
            cfg.pooling_kind,
            spec.rotation,
        ),
        None => build_model(cfg.n_qubits, cfg.encoding, cfg.block_type, cfg.pooling_kind),
    }
}

fn config_sha256(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn resolve_out_dir(cfg: &ExperimentConfig, out_override: Option<&Path>) -> PathBuf {
    out_override
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn write_report(dir: &Path, stem: &str, title: &str, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), report::to_csv(rows))?;
    std::fs::write(dir.join(format!("{stem}.txt")), report::to_table(title, rows))?;
    Ok(())
}

pub struct TrainOutcome {
    pub model: QcnnModel,
    pub params: ParamVector,
    pub history: TrainHistory,
    pub metrics: Metrics,
    pub manifest: Manifest,
    pub model_path: PathBuf,
}

/// Train per the config; write model.json, history.json and manifest.json.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    config_text: &str,
    out_override: Option<&Path>,
) -> Result<TrainOutcome> {
    let dir = resolve_out_dir(cfg, out_override);
    ensure_dir(&dir)?;

    let model = build_model_from_config(cfg)?;
    let splits = cfg.prepare_splits()?;
    let (history, params) = train(&model, &splits, &cfg.train)?;
    let metrics = evaluate(&model, &params, &splits)?;

    let metadata = ModelMetadata {
        seed: Some(cfg.train.seed),
        created_by: format!("qcnn {TOOL_VERSION}"),
        training_config: Some(
            serde_json::to_value(&cfg.train).map_err(|e| Error::Parse(e.to_string()))?,
        ),
    };
    let model_path = dir.join("model.json");
    model::save_model(&model_path, &model, &params, &metadata)?;
    write_json(&dir.join("history.json"), &history)?;

    let data_seed = match &cfg.dataset {
        DatasetSource::Synthetic { seed, .. } => Some(*seed),
        DatasetSource::Csv { .. } => None,
    };
    let manifest = Manifest {
        tool_version: TOOL_VERSION.to_string(),
        config_sha256: config_sha256(config_text),
        train_seed: cfg.train.seed,
        split_seed: cfg.split.seed,
        data_seed,
        metrics,
        model_file: "model.json".to_string(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    Ok(TrainOutcome {
        model,
        params,
        history,
        metrics,
        manifest,
        model_path,
    })
}

fn load_model_for(cfg: &ExperimentConfig, model_path: &Path) -> Result<(QcnnModel, ParamVector, Splits)> {
    let (model, params, _) = model::load_model(model_path)?;
    let splits = cfg.prepare_splits()?;
    if model.featured_qubits() != cfg.n_qubits {
        return Err(Error::Argument(format!(
            "model has {} featured qubits but the config says {}",
            model.featured_qubits(),
            cfg.n_qubits
        )));
    }
    Ok((model, params, splits))
}

/// Evaluate a saved model on the config's splits; write metrics files.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    model_path: &Path,
    out_override: Option<&Path>,
) -> Result<Metrics> {
    let dir = resolve_out_dir(cfg, out_override);
    ensure_dir(&dir)?;
    let (model, params, splits) = load_model_for(cfg, model_path)?;
    let metrics = evaluate(&model, &params, &splits)?;
    let rows = vec![ReportRow::new("baseline", &metrics)];
    write_report(&dir, "metrics", "evaluation", &rows)?;
    Ok(metrics)
}

pub struct DropoutOptions {
    pub mode: DropoutMode,
    pub fraction: f64,
    pub trials: usize,
    pub seed: u64,
}

impl DropoutOptions {
    /// Fill unset CLI fields from the config's mitigation block.
    pub fn resolve(
        cfg: &ExperimentConfig,
        mode: Option<DropoutMode>,
        fraction: Option<f64>,
        trials: Option<usize>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let from_cfg = match &cfg.mitigation {
            Some(MitigationSpec::Dropout {
                mode,
                fraction,
                trials,
                seed,
            }) => Some((*mode, *fraction, *trials, *seed)),
            _ => None,
        };
        let pick = |msg: &str| Err::<DropoutOptions, _>(Error::Argument(msg.into()));
        let Some(mode) = mode.or(from_cfg.map(|c| c.0)) else {
            return pick("dropout mode not given on the command line or in the config");
        };
        let Some(seed) = seed.or(from_cfg.map(|c| c.3)) else {
            return pick("dropout seed not given on the command line or in the config");
        };
        Ok(Self {
            mode,
            fraction: fraction.or(from_cfg.map(|c| c.1)).unwrap_or(0.05),
            trials: trials.or(from_cfg.map(|c| c.2)).unwrap_or(20),
            seed,
        })
    }
}

/// Hard-dropout trial suite on a saved model; write report files.
pub fn cmd_dropout(
    cfg: &ExperimentConfig,
    model_path: &Path,
    opts: &DropoutOptions,
    out_override: Option<&Path>,
) -> Result<DropoutReport> {
    let dir = resolve_out_dir(cfg, out_override);
    ensure_dir(&dir)?;
    let (model, params, splits) = load_model_for(cfg, model_path)?;
    let report = dropout_trial_suite(
        &model,
        &params,
        &splits,
        opts.mode,
        opts.fraction,
        opts.trials,
        opts.seed,
    )?;
    write_json(&dir.join("dropout_report.json"), &report)?;

    let mut rows = vec![ReportRow::new("baseline", &report.baseline)];
    for (i, t) in report.per_trial.iter().enumerate() {
        rows.push(ReportRow {
            label: format!("trial_{}", i + 1),
            test_accuracy: t.test_accuracy,
            validation_accuracy: t.validation_accuracy,
            gap: t.test_accuracy - t.validation_accuracy,
        });
    }
    write_report(&dir, "dropout_report", "hard dropout trials", &rows)?;
    Ok(report)
}

pub struct SoftDropOptions {
    pub grid: Vec<SoftDropoutPolicy>,
    pub selection_metric: SelectionMetric,
}

impl SoftDropOptions {
    pub fn resolve(
        cfg: &ExperimentConfig,
        grid: Option<Vec<SoftDropoutPolicy>>,
        selection_metric: Option<SelectionMetric>,
    ) -> Result<Self> {
        let from_cfg = match &cfg.mitigation {
            Some(MitigationSpec::SoftDropout {
                grid,
                selection_metric,
            }) => Some((grid.clone(), *selection_metric)),
            _ => None,
        };
        let grid = grid.unwrap_or_else(|| match from_cfg.as_ref().map(|c| &c.0) {
            Some(GridSpec::Policies(p)) => p.clone(),
            _ => mitigate::default_grid(),
        });
        for p in &grid {
            p.validate()?;
        }
        Ok(Self {
            grid,
            selection_metric: selection_metric
                .or(from_cfg.map(|c| c.1))
                .unwrap_or(SelectionMetric::ValidationAccuracy),
        })
    }
}

/// Soft-dropout threshold search on a saved model; write the search report
/// and a mitigated model file that differs from the input only in params.
pub fn cmd_softdrop(
    cfg: &ExperimentConfig,
    model_path: &Path,
    opts: &SoftDropOptions,
    out_override: Option<&Path>,
) -> Result<SearchReport> {
    let dir = resolve_out_dir(cfg, out_override);
    ensure_dir(&dir)?;
    let (model, params, metadata) = model::load_model(model_path)?;
    let splits = cfg.prepare_splits()?;
    let search = soft_dropout_search(&model, &params, &splits, &opts.grid, opts.selection_metric)?;
    write_json(&dir.join("softdrop_report.json"), &search)?;

    let rows: Vec<ReportRow> = search
        .rows
        .iter()
        .map(|r| ReportRow::new(r.policy.label(), &r.metrics))
        .collect();
    write_report(&dir, "softdrop_report", "soft dropout search", &rows)?;

    model::save_model(
        &dir.join("model_mitigated.json"),
        &model,
        &search.selected_params,
        &metadata,
    )?;
    Ok(search)
}

pub struct AncillaOutcome {
    pub before: Metrics,
    pub after: Metrics,
    pub dropped_gate_index: usize,
}

/// Train the ancilla variant, then drop its one trained rotation and
/// re-evaluate. The config must carry an `ancilla` block.
pub fn cmd_ancilla(
    cfg: &ExperimentConfig,
    config_text: &str,
    out_override: Option<&Path>,
) -> Result<AncillaOutcome> {
    if cfg.ancilla.is_none() {
        return Err(Error::Argument("config has no ancilla block".into()));
    }
    let dir = resolve_out_dir(cfg, out_override);
    let outcome = cmd_train(cfg, config_text, out_override)?;

    let ancilla_gate = outcome
        .model
        .gates
        .iter()
        .position(|g| g.layer_tag == LayerTag::Ancilla && !g.param_indices.is_empty())
        .ok_or_else(|| Error::Argument("model has no parameterized ancilla gate".into()))?;
    let (dropped_model, dropped_params) = drop_gate(&outcome.model, &outcome.params, ancilla_gate)?;

    let splits = cfg.prepare_splits()?;
    let after = evaluate(&dropped_model, &dropped_params, &splits)?;
    let rows = vec![
        ReportRow::new("before_drop", &outcome.metrics),
        ReportRow::new("after_drop", &after),
    ];
    write_report(&dir, "ancilla_report", "ancilla rotation drop", &rows)?;
    model::save_model(
        &dir.join("model_dropped.json"),
        &dropped_model,
        &dropped_params,
        &ModelMetadata {
            seed: Some(cfg.train.seed),
            created_by: format!("qcnn {TOOL_VERSION}"),
            training_config: None,
        },
    )?;
    Ok(AncillaOutcome {
        before: outcome.metrics,
        after,
        dropped_gate_index: ancilla_gate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_text(out_dir: &Path) -> String {
        format!(
            r#"{{
                "dataset": {{ "synthetic": {{ "n_per_class": 20, "k": 4, "separation": 6.0, "noise_sd": 1.0, "seed": 11 }} }},
                "encoding": "qubit",
                "n_qubits": 4,
                "block_type": "ry_6",
                "split": {{ "ratios": [0.6, 0.2, 0.2], "seed": 12, "stratified": true }},
                "train": {{ "iterations": 4, "batch_size": 8, "seed": 13 }},
                "output_dir": {:?}
            }}"#,
            out_dir.to_str().unwrap()
        )
    }

    #[test]
    fn train_writes_all_artifacts_and_manifest_matches_reeval() {
        let tmp = tempfile::tempdir().unwrap();
        let text = config_text(tmp.path());
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let outcome = cmd_train(&cfg, &text, None).unwrap();
        for f in ["model.json", "history.json", "manifest.json"] {
            assert!(tmp.path().join(f).exists(), "missing {f}");
        }
        assert_eq!(outcome.manifest.config_sha256.len(), 64);
        assert_eq!(outcome.manifest.train_seed, 13);
        assert_eq!(outcome.manifest.data_seed, Some(11));

        // eval on the saved model reproduces the manifest's metrics exactly
        let metrics = cmd_eval(&cfg, &outcome.model_path, None).unwrap();
        assert_eq!(metrics, outcome.manifest.metrics);
        let rows = report::from_csv(
            &std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap(),
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].test_accuracy, metrics.test_accuracy);
    }

    #[test]
    fn train_is_deterministic_across_runs() {
        let tmp_a = tempfile::tempdir().unwrap();
        let tmp_b = tempfile::tempdir().unwrap();
        let out_a = cmd_train(
            &ExperimentConfig::from_json(&config_text(tmp_a.path())).unwrap(),
            "x",
            None,
        )
        .unwrap();
        let out_b = cmd_train(
            &ExperimentConfig::from_json(&config_text(tmp_b.path())).unwrap(),
            "x",
            None,
        )
        .unwrap();
        assert_eq!(out_a.params, out_b.params);
        assert_eq!(out_a.history.cost, out_b.history.cost);
    }

    #[test]
    fn dropout_and_softdrop_write_reports() {
        let tmp = tempfile::tempdir().unwrap();
        let text = config_text(tmp.path());
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let outcome = cmd_train(&cfg, &text, None).unwrap();

        let opts = DropoutOptions::resolve(
            &cfg,
            Some(DropoutMode::SingleGate),
            None,
            Some(3),
            Some(7),
        )
        .unwrap();
        let rep = cmd_dropout(&cfg, &outcome.model_path, &opts, None).unwrap();
        assert_eq!(rep.per_trial.len(), 3);
        assert!(tmp.path().join("dropout_report.json").exists());
        assert!(tmp.path().join("dropout_report.csv").exists());

        let sopts = SoftDropOptions::resolve(&cfg, None, None).unwrap();
        let search = cmd_softdrop(&cfg, &outcome.model_path, &sopts, None).unwrap();
        assert!(tmp.path().join("model_mitigated.json").exists());

        // mitigated model differs from the trained one only in params
        let (m1, _, meta1) = model::load_model(&outcome.model_path).unwrap();
        let (m2, p2, meta2) =
            model::load_model(&tmp.path().join("model_mitigated.json")).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(meta1, meta2);
        assert_eq!(p2, search.selected_params);
    }

    #[test]
    fn dropout_options_require_mode_and_seed() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(&config_text(tmp.path())).unwrap();
        assert!(DropoutOptions::resolve(&cfg, None, None, None, Some(1)).is_err());
        assert!(DropoutOptions::resolve(&cfg, Some(DropoutMode::SingleGate), None, None, None).is_err());
    }

    #[test]
    fn ancilla_pipeline_reports_before_and_after() {
        let tmp = tempfile::tempdir().unwrap();
        let text = config_text(tmp.path()).replace(
            r#""encoding""#,
            r#""ancilla": { "rotation": "rx" }, "encoding""#,
        );
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let out = cmd_ancilla(&cfg, &text, None).unwrap();
        assert!(tmp.path().join("ancilla_report.csv").exists());
        assert!(tmp.path().join("model_dropped.json").exists());
        let (dropped, _, _) =
            model::load_model(&tmp.path().join("model_dropped.json")).unwrap();
        assert_eq!(out.dropped_gate_index, 0);
        assert!(dropped
            .gates
            .iter()
            .all(|g| !(g.layer_tag == LayerTag::Ancilla && !g.param_indices.is_empty())));
    }
}
