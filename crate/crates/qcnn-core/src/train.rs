//! MSE cost, gradient engines (parameter-shift and finite differences),
//! Nesterov-momentum training loop and accuracy/gap metrics.
//!
//! All reductions over samples run in ascending sample order so that equal
//! seeds and configs reproduce bit-identical trajectories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::model::{ParamVector, QcnnModel};
use crate::qsim::QuantumState;

/// Step size for central finite differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    ParameterShift,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub iterations: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_gradient_method")]
    pub gradient_method: GradientMethod,
}

fn default_learning_rate() -> f64 {
    0.01
}
fn default_momentum() -> f64 {
    0.9
}
fn default_batch_size() -> usize {
    25
}
fn default_gradient_method() -> GradientMethod {
    GradientMethod::ParameterShift
}

impl TrainConfig {
    fn validate(&self, train_size: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Argument(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 || self.batch_size > train_size {
            return Err(Error::Argument(format!(
                "batch_size {} must be in 1..={train_size}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Test/validation accuracy pair with their gap (test minus validation).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Full-training-set cost after each iteration.
    pub cost: Vec<f64>,
    pub final_params: ParamVector,
    pub config: TrainConfig,
}

/// Dataset rows encoded once into input states.
pub struct EncodedDataset {
    pub states: Vec<QuantumState>,
    pub labels: Vec<f64>,
}

impl EncodedDataset {
    pub fn encode(model: &QcnnModel, dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::Argument("empty dataset".into()));
        }
        let states = dataset
            .features
            .iter()
            .map(|row| model.encode_input(row))
            .collect::<Result<Vec<_>>>()?;
        let labels = dataset.labels.iter().map(|&l| f64::from(l)).collect();
        Ok(Self { states, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn forward_states(model: &QcnnModel, params: &ParamVector, states: &[QuantumState]) -> Result<Vec<f64>> {
    let ops = model.to_gate_ops(params)?;
    states
        .par_iter()
        .map(|s| {
            let mut st = s.clone();
            for op in &ops {
                op.apply(&mut st)?;
            }
            st.prob_one(model.readout_qubit)
        })
        .collect()
}

/// Mean squared error between labels and the continuous readout probability.
pub fn mse_cost(model: &QcnnModel, params: &ParamVector, dataset: &Dataset) -> Result<f64> {
    let enc = EncodedDataset::encode(model, dataset)?;
    mse_cost_encoded(model, params, &enc)
}

pub fn mse_cost_encoded(model: &QcnnModel, params: &ParamVector, data: &EncodedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let preds = forward_states(model, params, &data.states)?;
    let k = preds.len() as f64;
    Ok(preds
        .iter()
        .zip(&data.labels)
        .map(|(f, y)| (y - f) * (y - f))
        .sum::<f64>()
        / k)
}

/// dC/dtheta for every parameter.
///
/// `parameter_shift` uses the exact two-point rule f(theta +- pi/2) for
/// single-qubit rotation and U3 parameters, composed through the cost's chain
/// rule; controlled-rotation parameters fall back to central finite
/// differences with step [`FD_STEP`]. `finite_difference` uses central
/// differences for every parameter.
pub fn gradient(
    model: &QcnnModel,
    params: &ParamVector,
    batch: &Dataset,
    method: GradientMethod,
) -> Result<Vec<f64>> {
    let enc = EncodedDataset::encode(model, batch)?;
    gradient_encoded(model, params, &enc, method)
}

pub fn gradient_encoded(
    model: &QcnnModel,
    params: &ParamVector,
    batch: &EncodedDataset,
    method: GradientMethod,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let ops = model.to_gate_ops(params)?;
    // param index -> (owning gate position, exact shift rule applicable)
    let mut owner = vec![(0usize, false); model.n_params];
    for (g, spec) in model.gates.iter().enumerate() {
        let shiftable = spec.kind.is_single_qubit_parameterized();
        for &p in &spec.param_indices {
            owner[p] = (g, shiftable);
        }
    }
    let k = batch.len() as f64;

    // Per-sample contributions, reduced afterwards in ascending sample order.
    let per_sample: Vec<Result<Vec<f64>>> = batch
        .states
        .par_iter()
        .zip(batch.labels.par_iter())
        .map(|(input, &y)| {
            // prefix[i] = state after the first i gates
            let mut prefix = Vec::with_capacity(ops.len() + 1);
            prefix.push(input.clone());
            for op in &ops {
                let mut next = prefix.last().unwrap().clone();
                op.apply(&mut next)?;
                prefix.push(next);
            }
            let f_base = prefix.last().unwrap().prob_one(model.readout_qubit)?;

            let eval_shifted = |j: usize, delta: f64| -> Result<f64> {
                let g = owner[j].0;
                let mut shifted = params.clone();
                shifted.0[j] += delta;
                let op = model.to_gate_op_at(g, &shifted)?;
                let mut st = prefix[g].clone();
                op.apply(&mut st)?;
                for later in &ops[g + 1..] {
                    later.apply(&mut st)?;
                }
                st.prob_one(model.readout_qubit)
            };

            let mut grad = vec![0.0; model.n_params];
            for (j, slot) in grad.iter_mut().enumerate() {
                let exact = owner[j].1 && method == GradientMethod::ParameterShift;
                if exact {
                    let fp = eval_shifted(j, FRAC_PI_2)?;
                    let fm = eval_shifted(j, -FRAC_PI_2)?;
                    // dC/dtheta = 2 (f - y) * df/dtheta, averaged over the batch
                    *slot = 2.0 * (f_base - y) * (fp - fm) / 2.0 / k;
                } else {
                    let fp = eval_shifted(j, FD_STEP)?;
                    let fm = eval_shifted(j, -FD_STEP)?;
                    *slot = ((y - fp) * (y - fp) - (y - fm) * (y - fm)) / (2.0 * FD_STEP) / k;
                }
            }
            Ok(grad)
        })
        .collect();

    let mut total = vec![0.0; model.n_params];
    for g in per_sample {
        let g = g?;
        for (t, v) in total.iter_mut().zip(g) {
            *t += v;
        }
    }
    Ok(total)
}

/// One Nesterov-momentum update:
/// v' = mu * v - eta * grad(theta + mu * v); theta' = theta + v'.
pub fn nesterov_step(
    params: &[f64],
    velocity: &[f64],
    mut grad_at: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    learning_rate: f64,
    momentum: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.len() != velocity.len() {
        return Err(Error::Argument(format!(
            "params length {} != velocity length {}",
            params.len(),
            velocity.len()
        )));
    }
    let lookahead: Vec<f64> = params
        .iter()
        .zip(velocity)
        .map(|(p, v)| p + momentum * v)
        .collect();
    let grad = grad_at(&lookahead)?;
    if grad.len() != params.len() {
        return Err(Error::Argument(format!(
            "gradient length {} != params length {}",
            grad.len(),
            params.len()
        )));
    }
    let new_velocity: Vec<f64> = velocity
        .iter()
        .zip(&grad)
        .map(|(v, g)| momentum * v - learning_rate * g)
        .collect();
    let new_params: Vec<f64> = params.iter().zip(&new_velocity).map(|(p, v)| p + v).collect();
    Ok((new_params, new_velocity))
}

/// Seeded training loop: parameters start uniform in [0, 2pi), minibatches
/// are drawn without replacement from seeded epoch shuffles, and each
/// iteration applies one Nesterov step.
pub fn train(
    model: &QcnnModel,
    splits: &Splits,
    config: &TrainConfig,
) -> Result<(TrainHistory, ParamVector)> {
    if splits.train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    config.validate(splits.train.len())?;
    let enc = EncodedDataset::encode(model, &splits.train)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params: Vec<f64> = (0..model.n_params)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let mut velocity = vec![0.0; model.n_params];

    let mut cost_history = Vec::with_capacity(config.iterations);
    let mut order: Vec<usize> = (0..enc.len()).collect();
    let mut cursor = order.len(); // forces a shuffle before the first batch

    for iter in 0..config.iterations {
        if cursor >= order.len() {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch_idx = &order[cursor..end];
        cursor = end;
        let batch = EncodedDataset {
            states: batch_idx.iter().map(|&i| enc.states[i].clone()).collect(),
            labels: batch_idx.iter().map(|&i| enc.labels[i]).collect(),
        };

        let (p, v) = nesterov_step(
            &params,
            &velocity,
            |theta| gradient_encoded(model, &ParamVector(theta.to_vec()), &batch, config.gradient_method),
            config.learning_rate,
            config.momentum,
        )?;
        params = p;
        velocity = v;

        let cost = mse_cost_encoded(model, &ParamVector(params.clone()), &enc)?;
        if !cost.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite cost {cost} at iteration {iter}"
            )));
        }
        cost_history.push(cost);
    }

    let final_params = ParamVector(params);
    let history = TrainHistory {
        cost: cost_history,
        final_params: final_params.clone(),
        config: config.clone(),
    };
    Ok((history, final_params))
}

/// Fraction of samples whose thresholded readout matches the label. Ties
/// (f == threshold) count as class 1.
pub fn accuracy(model: &QcnnModel, params: &ParamVector, dataset: &Dataset, threshold: f64) -> Result<f64> {
    let enc = EncodedDataset::encode(model, dataset)?;
    let preds = forward_states(model, params, &enc.states)?;
    let correct = preds
        .iter()
        .zip(&enc.labels)
        .filter(|(f, y)| f64::from(u8::from(**f >= threshold)) == **y)
        .count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Test and validation accuracy with their gap.
pub fn evaluate(model: &QcnnModel, params: &ParamVector, splits: &Splits) -> Result<Metrics> {
    let test_accuracy = accuracy(model, params, &splits.test, 0.5)?;
    let validation_accuracy = accuracy(model, params, &splits.validation, 0.5)?;
    Ok(Metrics {
        test_accuracy,
        validation_accuracy,
        gap: test_accuracy - validation_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::model::{build_model, BlockType, Encoding, PoolingKind};

    fn toy_model() -> QcnnModel {
        build_model(2, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap()
    }

    fn toy_dataset() -> Dataset {
        Dataset::new(
            vec![
                vec![0.1, 0.2],
                vec![2.9, 3.0],
                vec![0.3, 0.1],
                vec![3.0, 2.8],
            ],
            vec![0, 1, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn mse_cost_arithmetic() {
        // K=2, f = (0.9, 0.2), y = (1, 0) -> 0.025; checked against the formula
        let residuals = [(1.0f64, 0.9f64), (0.0, 0.2)];
        let c: f64 = residuals.iter().map(|(y, f)| (y - f) * (y - f)).sum::<f64>() / 2.0;
        assert!((c - 0.025).abs() < 1e-15);
        // constant f = 0.5 costs 0.25 regardless of labels
        let m = toy_model();
        let ds = toy_dataset();
        let params = ParamVector(vec![0.0; m.n_params]);
        let cost = mse_cost(&m, &params, &ds).unwrap();
        assert!(cost >= 0.0);
    }

    #[test]
    fn mse_cost_rejects_empty_dataset() {
        let m = toy_model();
        let empty = Dataset::new(vec![], vec![]).unwrap();
        assert!(matches!(
            mse_cost(&m, &ParamVector(vec![0.0; m.n_params]), &empty),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn single_qubit_shift_rule_matches_closed_form() {
        // f(theta) = P(1) of Ry(theta)|0> = sin^2(theta/2); df/dtheta = sin(theta)/2
        use crate::model::{GateKind, GateSpec, LayerTag};
        let model = QcnnModel {
            n_qubits: 1,
            encoding: Encoding::Qubit,
            block_type: BlockType::RySix,
            pooling_kind: PoolingKind::CrzCrx,
            has_ancilla: false,
            gates: vec![GateSpec {
                kind: GateKind::Ry,
                target: 0,
                control: None,
                control_value: None,
                param_indices: vec![0],
                layer_tag: LayerTag::Conv(0),
            }],
            n_params: 1,
            readout_qubit: 0,
            active_schedule: vec![vec![0], vec![0]],
        };
        let theta = FRAC_PI_2;
        // with y = 0: dC/dtheta = 2 f df/dtheta; df/dtheta at pi/2 is 0.5
        let ds = Dataset::new(vec![vec![0.0]], vec![0]).unwrap();
        let enc = EncodedDataset::encode(&model, &ds).unwrap();
        let g = gradient_encoded(&model, &ParamVector(vec![theta]), &enc, GradientMethod::ParameterShift).unwrap();
        let f = (theta / 2.0f64).sin().powi(2);
        let expected = 2.0 * f * 0.5;
        assert!((g[0] - expected).abs() < 1e-12, "{} vs {expected}", g[0]);
        // cross-check with finite differences
        let g_fd = gradient_encoded(&model, &ParamVector(vec![theta]), &enc, GradientMethod::FiniteDifference).unwrap();
        assert!((g[0] - g_fd[0]).abs() < 1e-6);
    }

    #[test]
    fn gradient_methods_agree_on_random_model() {
        use rand::{Rng, SeedableRng};
        let m = build_model(4, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let params = ParamVector((0..m.n_params).map(|_| rng.gen_range(0.0..6.28)).collect());
        let ds = Dataset::new(
            (0..8)
                .map(|_| (0..4).map(|_| rng.gen_range(0.0..3.14)).collect())
                .collect(),
            (0..8).map(|i| (i % 2) as u8).collect(),
        )
        .unwrap();
        let a = gradient(&m, &params, &ds, GradientMethod::ParameterShift).unwrap();
        let b = gradient(&m, &params, &ds, GradientMethod::FiniteDifference).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn nesterov_reduces_to_gradient_descent_without_momentum() {
        let (p, v) = nesterov_step(&[1.0], &[0.0], |t| Ok(vec![2.0 * t[0]]), 0.1, 0.0).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert!((v[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn nesterov_fixed_point_at_zero_gradient() {
        let (p, v) = nesterov_step(&[0.7], &[0.0], |_| Ok(vec![0.0]), 0.1, 0.9).unwrap();
        assert_eq!(p, vec![0.7]);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn nesterov_quadratic_arithmetic() {
        // C(theta) = theta^2, eta = 0.1, mu = 0.9, theta = 1, v = 0:
        // lookahead 1, grad 2, v' = -0.2, theta' = 0.8
        let (p, v) = nesterov_step(&[1.0], &[0.0], |t| Ok(vec![2.0 * t[0]]), 0.1, 0.9).unwrap();
        assert!((v[0] + 0.2).abs() < 1e-15);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn nesterov_quadratic_converges_monotonically_without_momentum() {
        let mut theta = 1.0;
        let mut v = 0.0;
        let mut prev = theta * theta;
        for _ in 0..50 {
            let (p, nv) = nesterov_step(&[theta], &[v], |t| Ok(vec![2.0 * t[0]]), 0.3, 0.0).unwrap();
            theta = p[0];
            v = nv[0];
            let cost = theta * theta;
            assert!(cost <= prev);
            prev = cost;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn train_zero_iterations_returns_initial_params() {
        let m = toy_model();
        let ds = toy_dataset();
        let splits = data::split(&ds, (0.5, 0.25, 0.25), 1, false, false).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            iterations: 0,
            batch_size: 1,
            seed: 42,
            gradient_method: GradientMethod::ParameterShift,
        };
        let (hist, params) = train(&m, &splits, &cfg).unwrap();
        assert!(hist.cost.is_empty());
        assert_eq!(params.len(), m.n_params);
        // initial params come from the seeded rng, inside [0, 2pi)
        assert!(params.as_slice().iter().all(|&p| (0.0..std::f64::consts::TAU).contains(&p)));
    }

    #[test]
    fn train_is_deterministic() {
        let m = toy_model();
        let ds = toy_dataset();
        let splits = data::split(&ds, (0.5, 0.25, 0.25), 1, false, false).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            iterations: 5,
            batch_size: 2,
            seed: 7,
            gradient_method: GradientMethod::ParameterShift,
        };
        let (h1, p1) = train(&m, &splits, &cfg).unwrap();
        let (h2, p2) = train(&m, &splits, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn accuracy_examples() {
        // f = (0.6, 0.4), y = (1, 0) -> 1.0; y = (0, 1) -> 0.0
        let preds = [0.6, 0.4];
        let acc = |labels: [f64; 2]| -> f64 {
            preds
                .iter()
                .zip(labels)
                .filter(|(f, y)| f64::from(u8::from(**f >= 0.5)) == *y)
                .count() as f64
                / 2.0
        };
        assert_eq!(acc([1.0, 0.0]), 1.0);
        assert_eq!(acc([0.0, 1.0]), 0.0);
        // boundary: f == 0.5 counts as class 1
        assert_eq!(f64::from(u8::from(0.5f64 >= 0.5)), 1.0);
    }

    #[test]
    fn evaluate_gap_is_test_minus_validation() {
        // values from the reporting format
        let m = Metrics {
            test_accuracy: 0.9154,
            validation_accuracy: 0.7175,
            gap: 0.9154 - 0.7175,
        };
        assert!((m.gap - 0.1979).abs() < 1e-12);
        let m2 = Metrics {
            test_accuracy: 0.8728,
            validation_accuracy: 0.8548,
            gap: 0.8728 - 0.8548,
        };
        assert!((m2.gap - 0.018).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_zero_at_exact_fit() {
        // all residuals zero: label 1 with f = 1 (Ry(pi) on |0>)
        use crate::model::{GateKind, GateSpec, LayerTag};
        let model = QcnnModel {
            n_qubits: 1,
            encoding: Encoding::Qubit,
            block_type: BlockType::RySix,
            pooling_kind: PoolingKind::CrzCrx,
            has_ancilla: false,
            gates: vec![GateSpec {
                kind: GateKind::Ry,
                target: 0,
                control: None,
                control_value: None,
                param_indices: vec![0],
                layer_tag: LayerTag::Conv(0),
            }],
            n_params: 1,
            readout_qubit: 0,
            active_schedule: vec![vec![0], vec![0]],
        };
        let ds = Dataset::new(vec![vec![0.0]], vec![1]).unwrap();
        let enc = EncodedDataset::encode(&model, &ds).unwrap();
        let g = gradient_encoded(
            &model,
            &ParamVector(vec![std::f64::consts::PI]),
            &enc,
            GradientMethod::ParameterShift,
        )
        .unwrap();
        // stationary point: f = 1 = y, so the chain-rule factor vanishes
        assert!(g[0].abs() < 1e-12);
    }
}
