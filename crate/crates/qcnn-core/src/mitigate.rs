//! Post-training mitigation: hard gate dropout (single-qubit percentage,
//! single gate, CNOT percentage), soft-dropout parameter transforms, the
//! threshold-search loop and repeated-trial statistics.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Splits;
use crate::error::{Error, Result};
use crate::model::{GateKind, ParamVector, QcnnModel};
use crate::train::{evaluate, Metrics};

/// Post-training parameter perturbation. `round` rounds half-away-from-zero
/// to `decimals` places, `zero` clears magnitudes below `tau`, `snap` pulls
/// values within `delta` of an integer onto it. Non-composite policies may
/// restrict themselves to an index mask (`indices`); composites apply their
/// parts in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftDropoutPolicy {
    Identity,
    Round {
        decimals: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
    },
    Zero {
        tau: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
    },
    Snap {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indices: Option<Vec<usize>>,
    },
    Composite { parts: Vec<SoftDropoutPolicy> },
}

impl SoftDropoutPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SoftDropoutPolicy::Identity | SoftDropoutPolicy::Round { .. } => Ok(()),
            SoftDropoutPolicy::Zero { tau, .. } => {
                if *tau > 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Argument(format!("zero policy needs tau > 0, got {tau}")))
                }
            }
            SoftDropoutPolicy::Snap { delta, .. } => {
                if *delta > 0.0 && delta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Argument(format!("snap policy needs delta > 0, got {delta}")))
                }
            }
            SoftDropoutPolicy::Composite { parts } => {
                if parts.len() < 2 {
                    return Err(Error::Argument("composite policy needs at least 2 parts".into()));
                }
                for p in parts {
                    if matches!(p, SoftDropoutPolicy::Composite { .. }) {
                        return Err(Error::Argument("composite parts must not be composite".into()));
                    }
                    p.validate()?;
                }
                Ok(())
            }
        }
    }

    /// Short stable name used as the report row label.
    pub fn label(&self) -> String {
        match self {
            SoftDropoutPolicy::Identity => "identity".into(),
            SoftDropoutPolicy::Round { decimals, .. } => format!("round({decimals})"),
            SoftDropoutPolicy::Zero { tau, .. } => format!("zero({tau})"),
            SoftDropoutPolicy::Snap { delta, .. } => format!("snap({delta})"),
            SoftDropoutPolicy::Composite { parts } => {
                let inner: Vec<String> = parts.iter().map(SoftDropoutPolicy::label).collect();
                format!("composite[{}]", inner.join("+"))
            }
        }
    }
}

fn masked(indices: &Option<Vec<usize>>, j: usize) -> bool {
    match indices {
        None => true,
        Some(idx) => idx.contains(&j),
    }
}

/// Apply a soft-dropout policy to a parameter vector. The model structure is
/// untouched; only the angles change.
pub fn apply_policy(params: &ParamVector, policy: &SoftDropoutPolicy) -> Result<ParamVector> {
    policy.validate()?;
    let mut values = params.0.clone();
    apply_in_place(&mut values, policy);
    Ok(ParamVector(values))
}

fn apply_in_place(values: &mut [f64], policy: &SoftDropoutPolicy) {
    match policy {
        SoftDropoutPolicy::Identity => {}
        SoftDropoutPolicy::Round { decimals, indices } => {
            let scale = 10f64.powi(*decimals as i32);
            for (j, v) in values.iter_mut().enumerate() {
                if masked(indices, j) {
                    // f64::round is half-away-from-zero
                    *v = (*v * scale).round() / scale;
                }
            }
        }
        SoftDropoutPolicy::Zero { tau, indices } => {
            for (j, v) in values.iter_mut().enumerate() {
                if masked(indices, j) && v.abs() < *tau {
                    *v = 0.0;
                }
            }
        }
        SoftDropoutPolicy::Snap { delta, indices } => {
            for (j, v) in values.iter_mut().enumerate() {
                if masked(indices, j) {
                    let nearest = v.round();
                    if (*v - nearest).abs() <= *delta {
                        *v = nearest;
                    }
                }
            }
        }
        SoftDropoutPolicy::Composite { parts } => {
            for p in parts {
                apply_in_place(values, p);
            }
        }
    }
}

/// The fixed reproducible search grid: round(1..4), zero(0.01..0.09),
/// snap(0.05..0.25 step 0.05), identity first.
pub fn default_grid() -> Vec<SoftDropoutPolicy> {
    let mut grid = vec![SoftDropoutPolicy::Identity];
    for d in 1..=4 {
        grid.push(SoftDropoutPolicy::Round {
            decimals: d,
            indices: None,
        });
    }
    for i in 1..=9 {
        grid.push(SoftDropoutPolicy::Zero {
            tau: i as f64 / 100.0,
            indices: None,
        });
    }
    for i in 1..=5 {
        grid.push(SoftDropoutPolicy::Snap {
            delta: i as f64 * 0.05,
            indices: None,
        });
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    ValidationAccuracy,
    Gap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub policy: SoftDropoutPolicy,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub rows: Vec<SearchRow>,
    pub selected_index: usize,
    pub selected_policy: SoftDropoutPolicy,
    pub selected_params: ParamVector,
    pub selection_metric: SelectionMetric,
    pub baseline: Metrics,
}

/// Evaluate every policy on the grid and select the best one.
///
/// `validation_accuracy` picks the highest validation accuracy (earliest grid
/// entry on ties). `gap` picks the smallest |gap| among policies whose
/// validation accuracy is at least the identity's. The identity policy is
/// injected at the front when absent, so the selected validation accuracy
/// never falls below the unmitigated one.
pub fn soft_dropout_search(
    model: &QcnnModel,
    trained_params: &ParamVector,
    splits: &Splits,
    grid: &[SoftDropoutPolicy],
    selection_metric: SelectionMetric,
) -> Result<SearchReport> {
    if grid.is_empty() {
        return Err(Error::Argument("policy grid is empty".into()));
    }
    if splits.test.is_empty() || splits.validation.is_empty() {
        return Err(Error::Argument("test and validation splits must be nonempty".into()));
    }
    let mut full_grid: Vec<SoftDropoutPolicy> = Vec::with_capacity(grid.len() + 1);
    if !grid.contains(&SoftDropoutPolicy::Identity) {
        full_grid.push(SoftDropoutPolicy::Identity);
    }
    full_grid.extend_from_slice(grid);

    let baseline = evaluate(model, trained_params, splits)?;
    let mut rows = Vec::with_capacity(full_grid.len());
    let mut candidates = Vec::with_capacity(full_grid.len());
    for policy in &full_grid {
        let params = apply_policy(trained_params, policy)?;
        let metrics = evaluate(model, &params, splits)?;
        rows.push(SearchRow {
            policy: policy.clone(),
            metrics,
        });
        candidates.push(params);
    }

    let identity_val = rows
        .iter()
        .find(|r| r.policy == SoftDropoutPolicy::Identity)
        .map(|r| r.metrics.validation_accuracy)
        .unwrap_or(baseline.validation_accuracy);

    let selected_index = match selection_metric {
        SelectionMetric::ValidationAccuracy => {
            let mut best = 0usize;
            for (i, r) in rows.iter().enumerate() {
                if r.metrics.validation_accuracy > rows[best].metrics.validation_accuracy {
                    best = i;
                }
            }
            best
        }
        SelectionMetric::Gap => {
            let mut best: Option<usize> = None;
            for (i, r) in rows.iter().enumerate() {
                if r.metrics.validation_accuracy < identity_val {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => r.metrics.gap.abs() < rows[b].metrics.gap.abs(),
                };
                if better {
                    best = Some(i);
                }
            }
            // identity always qualifies, so the set is never empty
            best.expect("identity policy always qualifies")
        }
    };

    Ok(SearchReport {
        selected_policy: rows[selected_index].policy.clone(),
        selected_params: candidates.swap_remove(selected_index),
        rows,
        selected_index,
        selection_metric,
        baseline,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutMode {
    SingleQubitFraction,
    SingleGate,
    CnotFraction,
}

/// Remove the gates at `removed` (already chosen) and compact the parameter
/// vector; surviving gates keep their relative order.
fn remove_gates(model: &QcnnModel, params: &ParamVector, removed: &[usize]) -> Result<(QcnnModel, ParamVector)> {
    let mut dropped_params: Vec<usize> = removed
        .iter()
        .flat_map(|&g| model.gates[g].param_indices.iter().copied())
        .collect();
    dropped_params.sort_unstable();

    let remap = |old: usize| -> usize { old - dropped_params.partition_point(|&d| d < old) };

    let mut gates = Vec::with_capacity(model.gates.len() - removed.len());
    for (i, g) in model.gates.iter().enumerate() {
        if removed.contains(&i) {
            continue;
        }
        let mut g = g.clone();
        g.param_indices = g.param_indices.iter().map(|&p| remap(p)).collect();
        gates.push(g);
    }
    let new_params: Vec<f64> = params
        .0
        .iter()
        .enumerate()
        .filter(|(i, _)| dropped_params.binary_search(i).is_err())
        .map(|(_, &v)| v)
        .collect();

    let new_model = QcnnModel {
        n_params: new_params.len(),
        gates,
        ..model.clone()
    };
    new_model.validate()?;
    Ok((new_model, ParamVector(new_params)))
}

fn candidate_gates(model: &QcnnModel, mode: DropoutMode) -> Vec<usize> {
    model
        .gates
        .iter()
        .enumerate()
        .filter(|(_, g)| match mode {
            DropoutMode::SingleQubitFraction | DropoutMode::SingleGate => {
                g.kind.is_single_qubit_parameterized()
            }
            DropoutMode::CnotFraction => g.kind == GateKind::Cnot,
        })
        .map(|(i, _)| i)
        .collect()
}

/// Drop ceil(fraction * count) single-qubit parameterized gates chosen
/// uniformly without replacement; CNOT and pooling gates are untouched.
pub fn drop_single_qubit_gates(
    model: &QcnnModel,
    params: &ParamVector,
    fraction: f64,
    rng_seed: u64,
) -> Result<(QcnnModel, ParamVector)> {
    drop_fraction(model, params, fraction, rng_seed, DropoutMode::SingleQubitFraction)
}

/// Drop ceil(fraction * count) CNOT gates; the parameter vector is unchanged.
pub fn drop_cnot_gates(
    model: &QcnnModel,
    params: &ParamVector,
    fraction: f64,
    rng_seed: u64,
) -> Result<(QcnnModel, ParamVector)> {
    drop_fraction(model, params, fraction, rng_seed, DropoutMode::CnotFraction)
}

/// Seeded uniform choice of ceil(fraction * candidates) gates to drop.
fn choose_drop_set(
    model: &QcnnModel,
    fraction: f64,
    rng_seed: u64,
    mode: DropoutMode,
) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let candidates = candidate_gates(model, mode);
    if candidates.is_empty() {
        return Err(Error::Argument("model has no candidate gates for this mode".into()));
    }
    let count = ((fraction * candidates.len() as f64).ceil() as usize).clamp(1, candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

fn drop_fraction(
    model: &QcnnModel,
    params: &ParamVector,
    fraction: f64,
    rng_seed: u64,
    mode: DropoutMode,
) -> Result<(QcnnModel, ParamVector)> {
    let chosen = choose_drop_set(model, fraction, rng_seed, mode)?;
    remove_gates(model, params, &chosen)
}

/// Remove one gate (any kind) by index.
pub fn drop_gate(
    model: &QcnnModel,
    params: &ParamVector,
    gate_index: usize,
) -> Result<(QcnnModel, ParamVector)> {
    if gate_index >= model.gates.len() {
        return Err(Error::Index(format!(
            "gate index {gate_index} out of range for {} gates",
            model.gates.len()
        )));
    }
    remove_gates(model, params, &[gate_index])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub dropped_gate_indices: Vec<usize>,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutReport {
    pub mode: DropoutMode,
    pub fraction: f64,
    pub trials: usize,
    pub per_trial: Vec<TrialRow>,
    /// Summary over per-trial test accuracies (population std).
    pub summary: AccuracySummary,
    pub baseline: Metrics,
}

/// Run the chosen hard-dropout operation `trials` times with per-trial seeds
/// drawn from `seed`, collecting test/validation accuracy each time.
pub fn dropout_trial_suite(
    model: &QcnnModel,
    trained_params: &ParamVector,
    splits: &Splits,
    mode: DropoutMode,
    fraction: f64,
    trials: usize,
    seed: u64,
) -> Result<DropoutReport> {
    if trials == 0 {
        return Err(Error::Argument("trials must be at least 1".into()));
    }
    let baseline = evaluate(model, trained_params, splits)?;
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);
    let trial_seeds: Vec<u64> = (0..trials).map(|_| seed_rng.gen()).collect();

    let mut per_trial = Vec::with_capacity(trials);
    for trial_seed in trial_seeds {
        let indices = match mode {
            DropoutMode::SingleQubitFraction | DropoutMode::CnotFraction => {
                choose_drop_set(model, fraction, trial_seed, mode)?
            }
            DropoutMode::SingleGate => {
                let candidates = candidate_gates(model, DropoutMode::SingleGate);
                if candidates.is_empty() {
                    return Err(Error::Argument("no single-qubit gates to drop".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
                vec![candidates[rng.gen_range(0..candidates.len())]]
            }
        };
        let (dropped_model, dropped_params) = remove_gates(model, trained_params, &indices)?;
        let metrics = evaluate(&dropped_model, &dropped_params, splits)?;
        per_trial.push(TrialRow {
            dropped_gate_indices: indices,
            test_accuracy: metrics.test_accuracy,
            validation_accuracy: metrics.validation_accuracy,
        });
    }

    let accs: Vec<f64> = per_trial.iter().map(|t| t.test_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
    let summary = AccuracySummary {
        mean,
        min: accs.iter().cloned().fold(f64::INFINITY, f64::min),
        max: accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        std: var.sqrt(),
    };
    Ok(DropoutReport {
        mode,
        fraction,
        trials,
        per_trial,
        summary,
        baseline,
    })
}
