//! Dense statevector simulation.
//!
//! Basis index convention: qubit 0 is the most significant bit. For an
//! `n`-qubit register, wire `q` lives at bit position `n - 1 - q` of the
//! basis index, so `|10⟩` on two qubits is index 2.
//!
//! Rotations follow `R_P(θ) = exp(-iθσ_P/2)` and
//! `U3(θ, φ, λ) = RZ(φ)·RY(θ)·RZ(λ)`. Controlled rotations apply `R_P(θ)` to the
//! target when the control is `|1⟩`.

use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 10;

/// Widest wire set accepted by [`StateVector::joint_probabilities`].
pub const MAX_JOINT_WIRES: usize = 4;

static EXCITATION_READOUTS: AtomicU64 = AtomicU64::new(0);

/// Number of [`StateVector::excitation_probabilities`] calls made by this
/// process so far. Diagnostic counter; lets callers verify that a code path
/// never reads single-wire excitations.
pub fn excitation_readout_count() -> u64 {
    EXCITATION_READOUTS.load(Ordering::Relaxed)
}

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rx { wire: usize, theta: f64 },
    Ry { wire: usize, theta: f64 },
    Rz { wire: usize, theta: f64 },
    U3 { wire: usize, theta: f64, phi: f64, lambda: f64 },
    Cnot { control: usize, target: usize },
    Crx { control: usize, target: usize, theta: f64 },
    Crz { control: usize, target: usize, theta: f64 },
}

impl Gate {
    /// Wires touched by the gate; for two-qubit gates the control comes first.
    pub fn wires(&self) -> (usize, Option<usize>) {
        match *self {
            Gate::Rx { wire, .. } | Gate::Ry { wire, .. } | Gate::Rz { wire, .. } | Gate::U3 { wire, .. } => {
                (wire, None)
            }
            Gate::Cnot { control, target } | Gate::Crx { control, target, .. } | Gate::Crz { control, target, .. } => {
                (control, Some(target))
            }
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        match *self {
            Gate::Rx { theta, .. } | Gate::Ry { theta, .. } | Gate::Rz { theta, .. } => vec![theta],
            Gate::U3 { theta, phi, lambda, .. } => vec![theta, phi, lambda],
            Gate::Cnot { .. } => vec![],
            Gate::Crx { theta, .. } | Gate::Crz { theta, .. } => vec![theta],
        }
    }

    /// The inverse gate. CNOT is self-inverse; rotations negate their angle.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Rx { wire, theta } => Gate::Rx { wire, theta: -theta },
            Gate::Ry { wire, theta } => Gate::Ry { wire, theta: -theta },
            Gate::Rz { wire, theta } => Gate::Rz { wire, theta: -theta },
            Gate::U3 { wire, theta, phi, lambda } => Gate::U3 {
                wire,
                theta: -theta,
                phi: -lambda,
                lambda: -phi,
            },
            g @ Gate::Cnot { .. } => g,
            Gate::Crx { control, target, theta } => Gate::Crx { control, target, theta: -theta },
            Gate::Crz { control, target, theta } => Gate::Crz { control, target, theta: -theta },
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let bad = match *self {
            Gate::Rx { theta, .. }
            | Gate::Ry { theta, .. }
            | Gate::Rz { theta, .. }
            | Gate::Crx { theta, .. }
            | Gate::Crz { theta, .. } => (!theta.is_finite()).then_some(theta),
            Gate::U3 { theta, phi, lambda, .. } => [theta, phi, lambda].into_iter().find(|a| !a.is_finite()),
            Gate::Cnot { .. } => None,
        };
        if let Some(a) = bad {
            return Err(Error::NonFiniteAngle(a));
        }
        let (a, b) = self.wires();
        if a >= n_qubits {
            return Err(Error::InvalidWires(format!("wire {a} on {n_qubits}-qubit state")));
        }
        if let Some(b) = b {
            if b >= n_qubits {
                return Err(Error::InvalidWires(format!("wire {b} on {n_qubits}-qubit state")));
            }
            if a == b {
                return Err(Error::InvalidWires(format!("control and target both {a}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    ]
}

pub(crate) fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

pub(crate) fn rz(theta: f64) -> Mat2 {
    [
        [Complex64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

fn matmul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn u3(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    matmul2(&rz(phi), &matmul2(&ry(theta), &rz(lambda)))
}

/// Register of `n_qubits` qubits held as `2^n` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// The ground state `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(n_qubits));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps an amplitude vector; its length must be `2^n` and its squared
    /// norm within `1e-10` of one.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::AmplitudeLength(len));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount(n_qubits));
        }
        let state = Self { n_qubits, amplitudes };
        let norm = state.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `|amplitude|²` for every basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    #[inline]
    fn bit(&self, wire: usize) -> usize {
        1 << (self.n_qubits - 1 - wire)
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::Rx { wire, theta } => self.apply_single(wire, &rx(theta)),
            Gate::Ry { wire, theta } => self.apply_single(wire, &ry(theta)),
            Gate::Rz { wire, theta } => self.apply_diagonal(wire, theta),
            Gate::U3 { wire, theta, phi, lambda } => self.apply_single(wire, &u3(theta, phi, lambda)),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
            Gate::Crx { control, target, theta } => self.apply_controlled(control, target, &rx(theta)),
            Gate::Crz { control, target, theta } => self.apply_controlled(control, target, &rz(theta)),
        }
        Ok(())
    }

    /// Consuming form of [`StateVector::apply`].
    pub fn with_gate(mut self, gate: &Gate) -> Result<Self> {
        self.apply(gate)?;
        Ok(self)
    }

    fn apply_single(&mut self, wire: usize, m: &Mat2) {
        let bit = self.bit(wire);
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_diagonal(&mut self, wire: usize, theta: f64) {
        let bit = self.bit(wire);
        let lo = Complex64::from_polar(1.0, -theta / 2.0);
        let hi = lo.conj();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            *a *= if i & bit == 0 { lo } else { hi };
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = self.bit(control);
        let tbit = self.bit(target);
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    fn apply_controlled(&mut self, control: usize, target: usize, m: &Mat2) {
        let cbit = self.bit(control);
        let tbit = self.bit(target);
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | tbit];
                self.amplitudes[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amplitudes[i | tbit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn check_wires(&self, wires: &[usize]) -> Result<()> {
        for (k, &w) in wires.iter().enumerate() {
            if w >= self.n_qubits {
                return Err(Error::InvalidWires(format!("wire {w} on {}-qubit state", self.n_qubits)));
            }
            if wires[..k].contains(&w) {
                return Err(Error::InvalidWires(format!("duplicate wire {w}")));
            }
        }
        Ok(())
    }

    /// Joint outcome distribution of `wires`.
    ///
    /// Entry `b` is the probability that the measured bits, read in the order
    /// given (first wire = most significant bit of `b`), equal `b`.
    pub fn joint_probabilities(&self, wires: &[usize]) -> Result<Vec<f64>> {
        if wires.is_empty() || wires.len() > MAX_JOINT_WIRES {
            return Err(Error::InvalidWires(format!(
                "joint readout needs 1..={MAX_JOINT_WIRES} wires, got {}",
                wires.len()
            )));
        }
        self.check_wires(wires)?;
        let bits: Vec<usize> = wires.iter().map(|&w| self.bit(w)).collect();
        let k = wires.len();
        let mut out = vec![0.0; 1 << k];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let mut b = 0;
            for &bit in &bits {
                b = (b << 1) | usize::from(i & bit != 0);
            }
            out[b] += a.norm_sqr();
        }
        Ok(out)
    }

    /// Single-wire marginal `P(|1⟩)` for each wire in `wires`.
    pub fn excitation_probabilities(&self, wires: &[usize]) -> Result<Vec<f64>> {
        EXCITATION_READOUTS.fetch_add(1, Ordering::Relaxed);
        self.check_wires(wires)?;
        Ok(wires
            .iter()
            .map(|&w| {
                let bit = self.bit(w);
                self.amplitudes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i & bit != 0)
                    .map(|(_, a)| a.norm_sqr())
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            })
            .collect())
    }
}
