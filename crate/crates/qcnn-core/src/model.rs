//! QCNN construction: feature maps, convolution/pooling composition, the
//! ancilla variant, forward evaluation and model (de)serialization.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{rotation, u3, Gate2x2, GateOp, QuantumState, RotationKind};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    U3,
    Cnot,
    Crz,
    Crx,
}

impl GateKind {
    pub fn param_count(self) -> usize {
        match self {
            GateKind::U3 => 3,
            GateKind::Cnot => 0,
            _ => 1,
        }
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::Cnot | GateKind::Crz | GateKind::Crx)
    }

    /// Single-qubit parameterized gate (the hard-dropout candidate set).
    pub fn is_single_qubit_parameterized(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::U3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerTag {
    Conv(u32),
    Pool(u32),
    Ancilla,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_value: Option<u8>,
    pub param_indices: Vec<usize>,
    pub layer_tag: LayerTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Amplitude,
    Qubit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockType {
    #[serde(rename = "u3_15")]
    U3Fifteen,
    #[serde(rename = "ry_6")]
    RySix,
}

/// Second pooling rotation: the text variant uses CRx on the open control,
/// the figure variant uses a second CRz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingKind {
    CrzCrx,
    CrzCrz,
}

impl Default for PoolingKind {
    fn default() -> Self {
        PoolingKind::CrzCrx
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaRotation {
    Rx,
    Ry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcnnModel {
    pub n_qubits: usize,
    pub encoding: Encoding,
    pub block_type: BlockType,
    pub pooling_kind: PoolingKind,
    pub has_ancilla: bool,
    pub gates: Vec<GateSpec>,
    pub n_params: usize,
    pub readout_qubit: usize,
    /// Surviving qubits per stage, starting with the initial active set.
    pub active_schedule: Vec<Vec<usize>>,
}

/// Real-valued gate angles in radians; the object soft-dropout perturbs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl QcnnModel {
    /// Number of qubits that pass through the feature map.
    pub fn featured_qubits(&self) -> usize {
        self.n_qubits - usize::from(self.has_ancilla)
    }

    /// Index of the ancilla qubit, when present (always the highest wire).
    pub fn ancilla_qubit(&self) -> Option<usize> {
        self.has_ancilla.then_some(self.n_qubits - 1)
    }

    /// Structural invariants: parameter ownership partitions [0, n_params),
    /// control wires present exactly on controlled kinds, readout is the sole
    /// survivor of the last stage.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.n_params];
        for (i, g) in self.gates.iter().enumerate() {
            if g.param_indices.len() != g.kind.param_count() {
                return Err(Error::Argument(format!(
                    "gate {i}: {:?} expects {} params, has {}",
                    g.kind,
                    g.kind.param_count(),
                    g.param_indices.len()
                )));
            }
            if g.control.is_some() != g.kind.is_controlled() {
                return Err(Error::Argument(format!(
                    "gate {i}: control wire presence inconsistent with {:?}",
                    g.kind
                )));
            }
            for &p in &g.param_indices {
                if p >= self.n_params || seen[p] {
                    return Err(Error::Argument(format!(
                        "gate {i}: parameter index {p} out of range or repeated"
                    )));
                }
                seen[p] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Argument("unowned parameter indices".into()));
        }
        match self.active_schedule.last() {
            Some(last) if last.len() == 1 && last[0] == self.readout_qubit => Ok(()),
            _ => Err(Error::Argument(
                "readout qubit is not the sole survivor of the final stage".into(),
            )),
        }
    }

    /// Encode a feature row into the model's input state, leaving the ancilla
    /// (if any) in |0>.
    pub fn encode_input(&self, features: &[f64]) -> Result<QuantumState> {
        let featured = self.featured_qubits();
        let sub = match self.encoding {
            Encoding::Amplitude => amplitude_encode(features, featured)?,
            Encoding::Qubit => {
                if features.len() != featured {
                    return Err(Error::Argument(format!(
                        "qubit encoding needs exactly {featured} features, got {}",
                        features.len()
                    )));
                }
                qubit_encode(features)?
            }
        };
        if !self.has_ancilla {
            return Ok(sub);
        }
        // ancilla is the highest bit and starts in |0>: zero-pad the vector
        let mut amps = sub.amplitudes().to_vec();
        amps.resize(1 << self.n_qubits, Complex64::ZERO);
        QuantumState::from_amplitudes(self.n_qubits, amps)
    }

    /// Substitute parameter values into the gate list.
    pub fn to_gate_ops(&self, params: &ParamVector) -> Result<Vec<GateOp>> {
        if params.len() != self.n_params {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        if let Some(bad) = params.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite parameter {bad}")));
        }
        self.gates
            .iter()
            .map(|g| materialize(g, params.as_slice()))
            .collect()
    }

    /// Materialize a single gate with the given parameter values. Used by the
    /// gradient engine to rebuild only the shifted gate.
    pub fn to_gate_op_at(&self, gate_index: usize, params: &ParamVector) -> Result<GateOp> {
        let spec = self.gates.get(gate_index).ok_or_else(|| {
            Error::Index(format!(
                "gate index {gate_index} out of range for {} gates",
                self.gates.len()
            ))
        })?;
        if params.len() != self.n_params {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.n_params,
                params.len()
            )));
        }
        materialize(spec, params.as_slice())
    }
}

fn materialize(spec: &GateSpec, params: &[f64]) -> Result<GateOp> {
    let p = |i: usize| params[spec.param_indices[i]];
    let gate: Gate2x2 = match spec.kind {
        GateKind::Rx => rotation(RotationKind::Rx, p(0))?,
        GateKind::Ry => rotation(RotationKind::Ry, p(0))?,
        GateKind::Rz => rotation(RotationKind::Rz, p(0))?,
        GateKind::U3 => u3(p(0), p(1), p(2))?,
        GateKind::Cnot => Gate2x2::pauli_x(),
        GateKind::Crz => rotation(RotationKind::Rz, p(0))?,
        GateKind::Crx => rotation(RotationKind::Rx, p(0))?,
    };
    Ok(match spec.control {
        Some(control) => GateOp::Controlled {
            gate,
            control,
            target: spec.target,
            control_value: spec.control_value.unwrap_or(1),
        },
        None => GateOp::Single {
            gate,
            target: spec.target,
        },
    })
}

/// Features as normalized amplitudes, zero-padded to 2^n_qubits.
pub fn amplitude_encode(features: &[f64], n_qubits: usize) -> Result<QuantumState> {
    let dim = 1usize << n_qubits;
    if features.is_empty() || features.len() > dim {
        return Err(Error::Capacity(format!(
            "amplitude encoding takes 1..={dim} features on {n_qubits} qubits, got {}",
            features.len()
        )));
    }
    if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("non-finite feature {bad}")));
    }
    let norm = features.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Encoding("zero-norm feature vector".into()));
    }
    let mut amps = vec![Complex64::ZERO; dim];
    for (a, &f) in amps.iter_mut().zip(features) {
        *a = Complex64::new(f / norm, 0.0);
    }
    QuantumState::from_amplitudes(n_qubits, amps)
}

/// Separable state: qubit i prepared as cos(x_i/2)|0> + sin(x_i/2)|1>.
pub fn qubit_encode(features: &[f64]) -> Result<QuantumState> {
    if features.is_empty() {
        return Err(Error::Argument("qubit encoding needs at least one feature".into()));
    }
    if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("non-finite feature {bad}")));
    }
    let n = features.len();
    let mut amps = vec![Complex64::ZERO; 1 << n];
    for (idx, amp) in amps.iter_mut().enumerate() {
        let mut v = 1.0;
        for (q, &x) in features.iter().enumerate() {
            v *= if idx >> q & 1 == 0 {
                (x / 2.0).cos()
            } else {
                (x / 2.0).sin()
            };
        }
        *amp = Complex64::new(v, 0.0);
    }
    QuantumState::from_amplitudes(n, amps)
}

/// Brick pattern over the active qubits: adjacent pairs, then the offset row
/// with wraparound. A two-qubit stage gets a single block.
fn conv_pairs(active: &[usize]) -> Vec<(usize, usize)> {
    let m = active.len();
    if m == 2 {
        return vec![(active[0], active[1])];
    }
    let mut pairs = Vec::new();
    let mut i = 0;
    while i + 1 < m {
        pairs.push((active[i], active[i + 1]));
        i += 2;
    }
    let mut j = 1;
    while j + 1 < m {
        pairs.push((active[j], active[j + 1]));
        j += 2;
    }
    pairs.push((active[m - 1], active[0]));
    pairs
}

struct Builder {
    gates: Vec<GateSpec>,
    next_param: usize,
}

impl Builder {
    fn new() -> Self {
        Self {
            gates: Vec::new(),
            next_param: 0,
        }
    }

    fn take(&mut self, n: usize) -> Vec<usize> {
        let ids = (self.next_param..self.next_param + n).collect();
        self.next_param += n;
        ids
    }

    fn single(&mut self, kind: GateKind, target: usize, tag: LayerTag) {
        let ids = self.take(kind.param_count());
        self.gates.push(GateSpec {
            kind,
            target,
            control: None,
            control_value: None,
            param_indices: ids,
            layer_tag: tag,
        });
    }

    fn cnot(&mut self, control: usize, target: usize, tag: LayerTag) {
        self.gates.push(GateSpec {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            control_value: Some(1),
            param_indices: vec![],
            layer_tag: tag,
        });
    }

    fn controlled_rotation(
        &mut self,
        kind: GateKind,
        control: usize,
        target: usize,
        control_value: u8,
        tag: LayerTag,
    ) {
        let ids = self.take(1);
        self.gates.push(GateSpec {
            kind,
            target,
            control: Some(control),
            control_value: Some(control_value),
            param_indices: ids,
            layer_tag: tag,
        });
    }

    fn conv_block(&mut self, block: BlockType, q1: usize, q2: usize, tag: LayerTag) {
        match block {
            BlockType::U3Fifteen => {
                self.single(GateKind::U3, q1, tag);
                self.single(GateKind::U3, q2, tag);
                self.cnot(q1, q2, tag);
                self.single(GateKind::Ry, q1, tag);
                self.single(GateKind::Rz, q2, tag);
                self.cnot(q2, q1, tag);
                self.single(GateKind::Ry, q1, tag);
                self.cnot(q1, q2, tag);
                self.single(GateKind::U3, q1, tag);
                self.single(GateKind::U3, q2, tag);
            }
            BlockType::RySix => {
                self.single(GateKind::Ry, q1, tag);
                self.single(GateKind::Ry, q2, tag);
                self.cnot(q1, q2, tag);
                self.single(GateKind::Ry, q1, tag);
                self.single(GateKind::Ry, q2, tag);
                self.cnot(q1, q2, tag);
                self.single(GateKind::Ry, q1, tag);
                self.single(GateKind::Ry, q2, tag);
            }
        }
    }

    fn pool_block(&mut self, pooling: PoolingKind, control: usize, target: usize, tag: LayerTag) {
        self.controlled_rotation(GateKind::Crz, control, target, 1, tag);
        let second = match pooling {
            PoolingKind::CrzCrx => GateKind::Crx,
            PoolingKind::CrzCrz => GateKind::Crz,
        };
        self.controlled_rotation(second, control, target, 0, tag);
    }
}

/// Alternating convolution and pooling stages until a single active qubit
/// remains; that qubit is the readout.
pub fn build_model(
    n_qubits: usize,
    encoding: Encoding,
    block_type: BlockType,
    pooling_kind: PoolingKind,
) -> Result<QcnnModel> {
    build(n_qubits, encoding, block_type, pooling_kind, None)
}

/// As [`build_model`] plus one ancilla qubit (the highest wire) that skips
/// the feature map, carries one trained rotation, is entangled into wire 0 by
/// a CNOT after the first convolution layer, and never enters the active set.
pub fn build_ancilla_model(
    n_featured_qubits: usize,
    encoding: Encoding,
    block_type: BlockType,
    pooling_kind: PoolingKind,
    ancilla_rotation: AncillaRotation,
) -> Result<QcnnModel> {
    build(
        n_featured_qubits,
        encoding,
        block_type,
        pooling_kind,
        Some(ancilla_rotation),
    )
}

fn build(
    n_featured: usize,
    encoding: Encoding,
    block_type: BlockType,
    pooling_kind: PoolingKind,
    ancilla: Option<AncillaRotation>,
) -> Result<QcnnModel> {
    if n_featured < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 featured qubits, got {n_featured}"
        )));
    }
    let n_qubits = n_featured + usize::from(ancilla.is_some());
    if n_qubits > crate::qsim::MAX_QUBITS {
        return Err(Error::Capacity(format!("{n_qubits} qubits exceed the simulator cap")));
    }
    let ancilla_wire = n_featured;
    let mut b = Builder::new();
    if let Some(rot) = ancilla {
        let kind = match rot {
            AncillaRotation::Rx => GateKind::Rx,
            AncillaRotation::Ry => GateKind::Ry,
        };
        b.single(kind, ancilla_wire, LayerTag::Ancilla);
    }
    let mut active: Vec<usize> = (0..n_featured).collect();
    let mut schedule = vec![active.clone()];
    let mut stage: u32 = 0;
    while active.len() > 1 {
        for (q1, q2) in conv_pairs(&active) {
            b.conv_block(block_type, q1, q2, LayerTag::Conv(stage));
        }
        if stage == 0 && ancilla.is_some() {
            b.cnot(ancilla_wire, active[0], LayerTag::Ancilla);
        }
        let mut survivors = Vec::new();
        let mut i = 0;
        while i + 1 < active.len() {
            b.pool_block(pooling_kind, active[i], active[i + 1], LayerTag::Pool(stage));
            survivors.push(active[i + 1]);
            i += 2;
        }
        if active.len() % 2 == 1 {
            // unpaired qubit passes through untouched
            survivors.push(active[active.len() - 1]);
        }
        active = survivors;
        schedule.push(active.clone());
        stage += 1;
    }
    let model = QcnnModel {
        n_qubits,
        encoding,
        block_type,
        pooling_kind,
        has_ancilla: ancilla.is_some(),
        n_params: b.next_param,
        readout_qubit: active[0],
        gates: b.gates,
        active_schedule: schedule,
    };
    model.validate()?;
    Ok(model)
}

/// Apply the model's gates to `input` and read P(1) on the readout qubit.
pub fn forward(model: &QcnnModel, params: &ParamVector, input: &QuantumState) -> Result<f64> {
    if input.n_qubits() != model.n_qubits {
        return Err(Error::Argument(format!(
            "input has {} qubits, model needs {}",
            input.n_qubits(),
            model.n_qubits
        )));
    }
    let ops = model.to_gate_ops(params)?;
    let mut state = input.clone();
    for op in &ops {
        op.apply(&mut state)?;
    }
    state.prob_one(model.readout_qubit)
}

// ---------------------------------------------------------------------------
// Model file (JSON, format_version 1)
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    n_qubits: usize,
    encoding: Encoding,
    block_type: BlockType,
    pooling_kind: PoolingKind,
    has_ancilla: bool,
    gates: Vec<GateSpec>,
    n_params: usize,
    readout_qubit: usize,
    active_schedule: Vec<Vec<usize>>,
    params: Vec<f64>,
    #[serde(default)]
    metadata: Option<ModelMetadata>,
}

pub fn serialize(model: &QcnnModel, params: &ParamVector, metadata: &ModelMetadata) -> Result<String> {
    if params.len() != model.n_params {
        return Err(Error::Argument(format!(
            "expected {} parameters, got {}",
            model.n_params,
            params.len()
        )));
    }
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        n_qubits: model.n_qubits,
        encoding: model.encoding,
        block_type: model.block_type,
        pooling_kind: model.pooling_kind,
        has_ancilla: model.has_ancilla,
        gates: model.gates.clone(),
        n_params: model.n_params,
        readout_qubit: model.readout_qubit,
        active_schedule: model.active_schedule.clone(),
        params: params.0.clone(),
        metadata: Some(metadata.clone()),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))
}

pub fn deserialize(text: &str) -> Result<(QcnnModel, ParamVector, ModelMetadata)> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Version(format!(
            "format_version {} (supported: {MODEL_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let model = QcnnModel {
        n_qubits: file.n_qubits,
        encoding: file.encoding,
        block_type: file.block_type,
        pooling_kind: file.pooling_kind,
        has_ancilla: file.has_ancilla,
        gates: file.gates,
        n_params: file.n_params,
        readout_qubit: file.readout_qubit,
        active_schedule: file.active_schedule,
    };
    model.validate()?;
    if file.params.len() != model.n_params {
        return Err(Error::Parse(format!(
            "params array length {} does not match n_params {}",
            file.params.len(),
            model.n_params
        )));
    }
    Ok((
        model,
        ParamVector(file.params),
        file.metadata.unwrap_or_default(),
    ))
}

pub fn save_model(
    path: &std::path::Path,
    model: &QcnnModel,
    params: &ParamVector,
    metadata: &ModelMetadata,
) -> Result<()> {
    std::fs::write(path, serialize(model, params, metadata)?)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<(QcnnModel, ParamVector, ModelMetadata)> {
    let text = std::fs::read_to_string(path)?;
    deserialize(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{dense_unitary, mat_vec};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn amplitude_encode_basis_and_normalization() {
        let s = amplitude_encode(&[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-15);
        let s = amplitude_encode(&[3.0, 4.0], 2).unwrap();
        assert!((s.amplitudes()[0].re - 0.6).abs() < 1e-15);
        assert!((s.amplitudes()[1].re - 0.8).abs() < 1e-15);
        assert_eq!(s.amplitudes()[2].re, 0.0);
    }

    #[test]
    fn amplitude_encode_rejects_zero_norm() {
        assert!(matches!(
            amplitude_encode(&[0.0, 0.0, 0.0], 2),
            Err(Error::Encoding(_))
        ));
    }

    #[test]
    fn amplitude_encode_rejects_too_many_features() {
        assert!(matches!(
            amplitude_encode(&[1.0; 5], 2),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn qubit_encode_examples() {
        let s = qubit_encode(&[0.0, 0.0]).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-15);
        let s = qubit_encode(&[PI]).unwrap();
        assert!((s.amplitudes()[1].re - 1.0).abs() < 1e-15);
        // qubit 0 at pi/2, qubit 1 at 0 (little-endian)
        let s = qubit_encode(&[FRAC_PI_2, 0.0]).unwrap();
        let v = (FRAC_PI_2 / 2.0).cos();
        assert!((s.amplitudes()[0].re - v).abs() < 1e-15);
        assert!((s.amplitudes()[1].re - (FRAC_PI_2 / 2.0).sin()).abs() < 1e-15);
        assert_eq!(s.amplitudes()[2].re, 0.0);
        assert_eq!(s.amplitudes()[3].re, 0.0);
    }

    #[test]
    fn build_model_two_qubits_counts() {
        let m = build_model(2, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        // one conv block (6 params) plus one pool block (2 params)
        assert_eq!(m.n_params, 8);
        assert_eq!(m.active_schedule, vec![vec![0, 1], vec![1]]);
        assert_eq!(m.readout_qubit, 1);
    }

    #[test]
    fn build_model_eight_qubit_schedule_and_counts() {
        let m = build_model(8, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let sizes: Vec<usize> = m.active_schedule.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![8, 4, 2, 1]);
        // enumeration oracle: conv blocks per stage on m active qubits follow
        // the brick rule (m/2 + m/2 with wraparound for m > 2, one for m == 2)
        let conv_blocks = 8 + 4 + 1;
        let pool_blocks = 4 + 2 + 1;
        assert_eq!(m.n_params, conv_blocks * 6 + pool_blocks * 2);
        m.validate().unwrap();
    }

    #[test]
    fn build_model_twelve_qubit_passthrough_schedule() {
        let m = build_model(12, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let sizes: Vec<usize> = m.active_schedule.iter().map(|s| s.len()).collect();
        assert_eq!(sizes, vec![12, 6, 3, 2, 1]);
    }

    #[test]
    fn build_model_rejects_single_qubit() {
        assert!(matches!(
            build_model(1, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn u3_block_parameter_count() {
        let m = build_model(2, Encoding::Qubit, BlockType::U3Fifteen, PoolingKind::CrzCrx).unwrap();
        assert_eq!(m.n_params, 15 + 2);
    }

    #[test]
    fn ancilla_model_adds_one_parameter_and_tag() {
        let base = build_model(8, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let anc = build_ancilla_model(
            8,
            Encoding::Qubit,
            BlockType::RySix,
            PoolingKind::CrzCrx,
            AncillaRotation::Ry,
        )
        .unwrap();
        assert_eq!(anc.n_params, base.n_params + 1);
        assert_eq!(anc.n_qubits, 9);
        let tagged: Vec<&GateSpec> = anc
            .gates
            .iter()
            .filter(|g| g.layer_tag == LayerTag::Ancilla)
            .collect();
        assert_eq!(tagged.len(), 2); // rotation + entangling CNOT
        assert!(tagged[0].kind.is_single_qubit_parameterized());
        assert_eq!(tagged[1].kind, GateKind::Cnot);
    }

    #[test]
    fn ancilla_angle_zero_matches_base_model() {
        let base = build_model(4, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let anc = build_ancilla_model(
            4,
            Encoding::Qubit,
            BlockType::RySix,
            PoolingKind::CrzCrx,
            AncillaRotation::Ry,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let base_params: Vec<f64> = (0..base.n_params).map(|_| rng.gen_range(0.0..6.28)).collect();
        // ancilla rotation owns param index 0; shift the rest by one
        let mut anc_params = vec![0.0];
        anc_params.extend_from_slice(&base_params);
        let features = [0.3, 1.1, 2.0, 0.7];
        let f_base = forward(&base, &ParamVector(base_params), &base.encode_input(&features).unwrap()).unwrap();
        let f_anc = forward(&anc, &ParamVector(anc_params), &anc.encode_input(&features).unwrap()).unwrap();
        assert!((f_base - f_anc).abs() < 1e-12);
    }

    #[test]
    fn forward_zero_params_on_zero_input_is_zero() {
        let m = build_model(4, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let params = ParamVector(vec![0.0; m.n_params]);
        let input = m.encode_input(&[0.0; 4]).unwrap();
        assert_eq!(forward(&m, &params, &input).unwrap(), 0.0);
        let m = build_model(4, Encoding::Qubit, BlockType::U3Fifteen, PoolingKind::CrzCrx).unwrap();
        let params = ParamVector(vec![0.0; m.n_params]);
        let input = m.encode_input(&[0.0; 4]).unwrap();
        assert_eq!(forward(&m, &params, &input).unwrap(), 0.0);
    }

    #[test]
    fn forward_is_a_probability() {
        let m = build_model(3, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let input = m.encode_input(&[0.4, 1.0, 2.2]).unwrap();
        for _ in 0..100 {
            let params = ParamVector((0..m.n_params).map(|_| rng.gen_range(-6.3..6.3)).collect());
            let f = forward(&m, &params, &input).unwrap();
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn forward_matches_dense_oracle_on_four_qubits() {
        let m = build_model(4, Encoding::Qubit, BlockType::U3Fifteen, PoolingKind::CrzCrx).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let params = ParamVector((0..m.n_params).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let input = m.encode_input(&[0.2, 1.4, 2.6, 0.9]).unwrap();
        let f = forward(&m, &params, &input).unwrap();
        let u = dense_unitary(&m.to_gate_ops(&params).unwrap(), 4).unwrap();
        let out = mat_vec(&u, input.amplitudes());
        let bit = 1usize << m.readout_qubit;
        let p: f64 = out
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!((f - p).abs() < 1e-10);
    }

    #[test]
    fn forward_rejects_length_mismatch() {
        let m = build_model(2, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let input = m.encode_input(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            forward(&m, &ParamVector(vec![0.0; 3]), &input),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn model_round_trip_is_identity() {
        let m = build_model(8, Encoding::Amplitude, BlockType::U3Fifteen, PoolingKind::CrzCrz).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let params = ParamVector((0..m.n_params).map(|_| rng.gen_range(0.0..6.28)).collect());
        let meta = ModelMetadata {
            seed: Some(9),
            created_by: "test".into(),
            training_config: None,
        };
        let text = serialize(&m, &params, &meta).unwrap();
        let (m2, p2, meta2) = deserialize(&text).unwrap();
        assert_eq!(m, m2);
        assert_eq!(params, p2);
        assert_eq!(meta, meta2);
    }

    #[test]
    fn deserialize_reports_missing_field() {
        let err = deserialize(r#"{ "format_version": 1, "n_qubits": 2 }"#).unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("missing field"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn deserialize_rejects_future_version() {
        let m = build_model(2, Encoding::Qubit, BlockType::RySix, PoolingKind::CrzCrx).unwrap();
        let text = serialize(&m, &ParamVector(vec![0.0; m.n_params]), &ModelMetadata::default()).unwrap();
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(deserialize(&bumped), Err(Error::Version(_))));
    }
}
