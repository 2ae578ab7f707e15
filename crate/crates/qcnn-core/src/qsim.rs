//! Dense state-vector simulation core.
//!
//! Amplitude indexing is little-endian: qubit 0 is the least significant bit
//! of the amplitude index. Rotations follow the convention
//! `R_P(theta) = exp(-i * theta * P / 2)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Norm deviation tolerated after any gate application.
pub const NORM_TOL: f64 = 1e-12;

/// Hard cap on simulated qubits (2^24 amplitudes, 256 MiB).
pub const MAX_QUBITS: usize = 24;

/// Hard cap for the dense-unitary oracle.
pub const MAX_ORACLE_QUBITS: usize = 6;

/// Pure state over `n_qubits`, stored as 2^n complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// All-zero computational basis state |0...0>.
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Build from explicit amplitudes; must be unit norm within [`NORM_TOL`].
    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        if amps.len() != 1 << n_qubits {
            return Err(Error::Argument(format!(
                "expected {} amplitudes, got {}",
                1usize << n_qubits,
                amps.len()
            )));
        }
        let state = Self { n_qubits, amps };
        if (state.norm_sq() - 1.0).abs() > NORM_TOL {
            return Err(Error::Argument(format!(
                "state is not unit norm: |psi|^2 = {}",
                state.norm_sq()
            )));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Apply a single-qubit gate to `target`.
    pub fn apply_single(&mut self, g: &Gate2x2, target: usize) -> Result<()> {
        if target >= self.n_qubits {
            return Err(Error::Index(format!(
                "target {target} out of range for {} qubits",
                self.n_qubits
            )));
        }
        let m = &g.m;
        let diagonal = m[0][1] == Complex64::ZERO && m[1][0] == Complex64::ZERO;
        let real = m.iter().flatten().all(|e| e.im == 0.0);
        let stride = 1usize << target;
        let half = self.amps.len() >> 1;
        if diagonal {
            let (d0, d1) = (m[0][0], m[1][1]);
            for i in 0..half {
                let lo = ((i >> target) << (target + 1)) | (i & (stride - 1));
                let hi = lo | stride;
                self.amps[lo] *= d0;
                self.amps[hi] *= d1;
            }
        } else if real {
            let (a, b, c, d) = (m[0][0].re, m[0][1].re, m[1][0].re, m[1][1].re);
            for i in 0..half {
                let lo = ((i >> target) << (target + 1)) | (i & (stride - 1));
                let hi = lo | stride;
                let x = self.amps[lo];
                let y = self.amps[hi];
                self.amps[lo] = Complex64::new(a * x.re + b * y.re, a * x.im + b * y.im);
                self.amps[hi] = Complex64::new(c * x.re + d * y.re, c * x.im + d * y.im);
            }
        } else {
            for i in 0..half {
                let lo = ((i >> target) << (target + 1)) | (i & (stride - 1));
                let hi = lo | stride;
                let x = self.amps[lo];
                let y = self.amps[hi];
                self.amps[lo] = m[0][0] * x + m[0][1] * y;
                self.amps[hi] = m[1][0] * x + m[1][1] * y;
            }
        }
        Ok(())
    }

    /// Apply `g` to `target` on the subspace where the control bit equals
    /// `control_value` (1 = filled circle, 0 = open circle).
    pub fn apply_controlled(
        &mut self,
        g: &Gate2x2,
        control: usize,
        target: usize,
        control_value: u8,
    ) -> Result<()> {
        if control == target {
            return Err(Error::Argument(format!(
                "control and target coincide at qubit {control}"
            )));
        }
        if control >= self.n_qubits || target >= self.n_qubits {
            return Err(Error::Index(format!(
                "control {control} / target {target} out of range for {} qubits",
                self.n_qubits
            )));
        }
        if control_value > 1 {
            return Err(Error::Argument(format!(
                "control_value must be 0 or 1, got {control_value}"
            )));
        }
        let m = &g.m;
        let stride = 1usize << target;
        let cbit = 1usize << control;
        let half = self.amps.len() >> 1;
        for i in 0..half {
            let lo = ((i >> target) << (target + 1)) | (i & (stride - 1));
            if ((lo & cbit) != 0) as u8 != control_value {
                continue;
            }
            let hi = lo | stride;
            let x = self.amps[lo];
            let y = self.amps[hi];
            self.amps[lo] = m[0][0] * x + m[0][1] * y;
            self.amps[hi] = m[1][0] * x + m[1][1] * y;
        }
        Ok(())
    }

    /// Probability of measuring `qubit` in |1>, marginalizing over all other
    /// qubits. This is where pooled-out qubits are implicitly traced out.
    pub fn prob_one(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        let bit = 1usize << qubit;
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }
}

/// 2x2 complex matrix acting on one qubit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate2x2 {
    pub m: [[Complex64; 2]; 2],
}

impl Gate2x2 {
    pub fn identity() -> Self {
        Self {
            m: [
                [Complex64::ONE, Complex64::ZERO],
                [Complex64::ZERO, Complex64::ONE],
            ],
        }
    }

    pub fn pauli_x() -> Self {
        Self {
            m: [
                [Complex64::ZERO, Complex64::ONE],
                [Complex64::ONE, Complex64::ZERO],
            ],
        }
    }

    pub fn mul(&self, rhs: &Gate2x2) -> Gate2x2 {
        let mut out = [[Complex64::ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = self.m[r][0] * rhs.m[0][c] + self.m[r][1] * rhs.m[1][c];
            }
        }
        Gate2x2 { m: out }
    }

    pub fn adjoint(&self) -> Gate2x2 {
        Gate2x2 {
            m: [
                [self.m[0][0].conj(), self.m[1][0].conj()],
                [self.m[0][1].conj(), self.m[1][1].conj()],
            ],
        }
    }

    /// G * G^dagger == I within `tol`.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let p = self.mul(&self.adjoint());
        (p.m[0][0] - Complex64::ONE).norm() <= tol
            && (p.m[1][1] - Complex64::ONE).norm() <= tol
            && p.m[0][1].norm() <= tol
            && p.m[1][0].norm() <= tol
    }
}

/// Pauli rotation axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotationKind {
    Rx,
    Ry,
    Rz,
}

/// `exp(-i * theta * P / 2)` for Pauli `P` selected by `kind`.
pub fn rotation(kind: RotationKind, theta: f64) -> Result<Gate2x2> {
    if !theta.is_finite() {
        return Err(Error::Argument(format!("non-finite angle {theta}")));
    }
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let m = match kind {
        RotationKind::Rx => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        RotationKind::Ry => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        RotationKind::Rz => [
            [Complex64::new(c, -s), Complex64::ZERO],
            [Complex64::ZERO, Complex64::new(c, s)],
        ],
    };
    Ok(Gate2x2 { m })
}

/// General single-qubit rotation assembled as
/// `Rz(phi) * Rx(-pi/2) * Rz(theta) * Rx(pi/2) * Rz(lam)`
/// (matrix product; the rightmost factor acts first).
pub fn u3(theta: f64, phi: f64, lam: f64) -> Result<Gate2x2> {
    use std::f64::consts::FRAC_PI_2;
    for a in [theta, phi, lam] {
        if !a.is_finite() {
            return Err(Error::Argument(format!("non-finite angle {a}")));
        }
    }
    let g = rotation(RotationKind::Rz, phi)?
        .mul(&rotation(RotationKind::Rx, -FRAC_PI_2)?)
        .mul(&rotation(RotationKind::Rz, theta)?)
        .mul(&rotation(RotationKind::Rx, FRAC_PI_2)?)
        .mul(&rotation(RotationKind::Rz, lam)?);
    Ok(g)
}

/// One gate of a concrete (parameter-substituted) circuit.
#[derive(Clone, Debug)]
pub enum GateOp {
    Single {
        gate: Gate2x2,
        target: usize,
    },
    Controlled {
        gate: Gate2x2,
        control: usize,
        target: usize,
        control_value: u8,
    },
}

impl GateOp {
    pub fn apply(&self, state: &mut QuantumState) -> Result<()> {
        match self {
            GateOp::Single { gate, target } => state.apply_single(gate, *target),
            GateOp::Controlled {
                gate,
                control,
                target,
                control_value,
            } => state.apply_controlled(gate, *control, *target, *control_value),
        }
    }
}

/// Explicit 2^n x 2^n matrix of a gate sequence, built by embedding each gate
/// with identity tensor factors and multiplying in circuit order. Test oracle
/// only; capped at [`MAX_ORACLE_QUBITS`].
pub fn dense_unitary(sequence: &[GateOp], n_qubits: usize) -> Result<Vec<Vec<Complex64>>> {
    if n_qubits == 0 || n_qubits > MAX_ORACLE_QUBITS {
        return Err(Error::Capacity(format!(
            "dense oracle supports 1..={MAX_ORACLE_QUBITS} qubits, got {n_qubits}"
        )));
    }
    let dim = 1usize << n_qubits;
    let mut total = identity_matrix(dim);
    for op in sequence {
        let embedded = embed(op, n_qubits)?;
        total = mat_mul(&embedded, &total);
    }
    Ok(total)
}

fn identity_matrix(dim: usize) -> Vec<Vec<Complex64>> {
    let mut m = vec![vec![Complex64::ZERO; dim]; dim];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex64::ONE;
    }
    m
}

fn embed(op: &GateOp, n_qubits: usize) -> Result<Vec<Vec<Complex64>>> {
    let dim = 1usize << n_qubits;
    let mut out = vec![vec![Complex64::ZERO; dim]; dim];
    match op {
        GateOp::Single { gate, target } => {
            if *target >= n_qubits {
                return Err(Error::Index(format!("target {target} out of range")));
            }
            let tbit = 1usize << target;
            for col in 0..dim {
                let cb = usize::from(col & tbit != 0);
                for rb in 0..2 {
                    let row = (col & !tbit) | (rb << target);
                    out[row][col] = gate.m[rb][cb];
                }
            }
        }
        GateOp::Controlled {
            gate,
            control,
            target,
            control_value,
        } => {
            if *control == *target {
                return Err(Error::Argument("control equals target".into()));
            }
            if *control >= n_qubits || *target >= n_qubits {
                return Err(Error::Index("control/target out of range".into()));
            }
            let tbit = 1usize << target;
            let cbit = 1usize << control;
            for col in 0..dim {
                if ((col & cbit != 0) as u8) != *control_value {
                    out[col][col] = Complex64::ONE;
                    continue;
                }
                let cb = usize::from(col & tbit != 0);
                for rb in 0..2 {
                    let row = (col & !tbit) | (rb << target);
                    out[row][col] = gate.m[rb][cb];
                }
            }
        }
    }
    Ok(out)
}

fn mat_mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let mut out = vec![vec![Complex64::ZERO; n]; n];
    for r in 0..n {
        for k in 0..n {
            let av = a[r][k];
            if av == Complex64::ZERO {
                continue;
            }
            for c in 0..n {
                out[r][c] += av * b[k][c];
            }
        }
    }
    out
}

/// Multiply a dense matrix into a state vector (oracle-side evaluation).
pub fn mat_vec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}
