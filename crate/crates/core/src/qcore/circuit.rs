//! Circuits as ordered gate lists, and their exact evolution of pure states
//! and density matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::gates::{standard_gate, GateKind};
use crate::qcore::matrix::{CMatrix, C};
use crate::qcore::noise::NoiseModel;
use crate::qcore::state::{DensityMatrix, StateVector};
use crate::scalar::Real;

/// Lifts a `k`-qubit operator acting on `qubits` (listed most significant
/// first) to the full `n`-qubit space.
pub fn embed_operator<T: Real>(op: &CMatrix<T>, qubits: &[usize], n_qubits: usize) -> CMatrix<T> {
    let k = qubits.len();
    assert_eq!(op.rows(), 1 << k, "operator size vs qubit count");
    let dim = 1usize << n_qubits;
    let shift = |q: usize| n_qubits - 1 - q;
    let sub_index = |i: usize| {
        qubits
            .iter()
            .fold(0usize, |acc, &q| (acc << 1) | ((i >> shift(q)) & 1))
    };
    let mask: usize = qubits.iter().map(|&q| 1usize << shift(q)).sum();
    let zero = C::new(T::zero(), T::zero());
    CMatrix::from_fn(dim, dim, |r, c| {
        if (r & !mask) != (c & !mask) {
            zero
        } else {
            op[(sub_index(r), sub_index(c))]
        }
    })
}

/// One gate application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate<T> {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub angles: Vec<T>,
}

impl<T: Real> Gate<T> {
    pub fn local_matrix(&self) -> Result<CMatrix<T>> {
        standard_gate(self.kind, &self.angles)
    }
}

/// Ordered list of gates on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec<T> {
    n_qubits: usize,
    gates: Vec<Gate<T>>,
}

impl<T: Real> CircuitSpec<T> {
    pub fn new(n_qubits: usize) -> Self {
        assert!((1..=3).contains(&n_qubits), "1–3 qubits supported");
        Self { n_qubits, gates: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate<T>] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, kind: GateKind, qubits: &[usize], angles: &[T]) -> Result<&mut Self> {
        if qubits.len() != kind.n_qubits() {
            return Err(Error::InvalidParameter(format!(
                "{kind} acts on {} qubit(s), got {}",
                kind.n_qubits(),
                qubits.len()
            )));
        }
        if let Some(&q) = qubits.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::InvalidParameter(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::InvalidParameter(format!("{kind} needs two distinct qubits")));
        }
        if angles.len() != kind.n_angles() {
            return Err(Error::InvalidParameter(format!(
                "{kind} takes {} angle(s), got {}",
                kind.n_angles(),
                angles.len()
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("{kind} angle")));
        }
        self.gates.push(Gate { kind, qubits: qubits.to_vec(), angles: angles.to_vec() });
        Ok(self)
    }

    /// Builder form of [`push`](Self::push).
    pub fn with(mut self, kind: GateKind, qubits: &[usize], angles: &[T]) -> Result<Self> {
        self.push(kind, qubits, angles)?;
        Ok(self)
    }

    pub fn extend(&mut self, other: &Self) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, found: other.n_qubits });
        }
        self.gates.extend(other.gates.iter().cloned());
        Ok(())
    }

    /// Full `2^n × 2^n` operator of the gate at `index`.
    pub fn gate_operator(&self, index: usize) -> Result<CMatrix<T>> {
        let g = &self.gates[index];
        Ok(embed_operator(&g.local_matrix()?, &g.qubits, self.n_qubits))
    }

    /// Product of all gate operators.
    pub fn unitary(&self) -> Result<CMatrix<T>> {
        let mut u = CMatrix::identity(1 << self.n_qubits);
        for i in 0..self.gates.len() {
            u = self.gate_operator(i)?.matmul(&u);
        }
        Ok(u)
    }
}

pub fn apply_circuit_state<T: Real>(psi: &StateVector<T>, circuit: &CircuitSpec<T>) -> Result<StateVector<T>> {
    if psi.n_qubits() != circuit.n_qubits() {
        return Err(Error::DimensionMismatch { expected: circuit.n_qubits(), found: psi.n_qubits() });
    }
    let mut amps = psi.amplitudes().to_vec();
    for i in 0..circuit.len() {
        amps = circuit.gate_operator(i)?.mul_vec(&amps);
    }
    Ok(StateVector::from_unitary_image(psi.n_qubits(), amps))
}

/// Evolves `rho` gate by gate: `ρ ← UρU†`, then (if `noise` is given) the
/// noise channel on each qubit the gate touched.
pub fn apply_circuit_density<T: Real>(
    rho: &DensityMatrix<T>,
    circuit: &CircuitSpec<T>,
    noise: Option<&NoiseModel<T>>,
) -> Result<DensityMatrix<T>> {
    let n = circuit.n_qubits();
    if rho.n_qubits() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rho.n_qubits() });
    }
    if let Some(model) = noise {
        if model.n_qubits() != n {
            return Err(Error::DimensionMismatch { expected: n, found: model.n_qubits() });
        }
    }
    let mut m = rho.matrix().clone();
    for (i, gate) in circuit.gates().iter().enumerate() {
        m = m.conjugate_by(&circuit.gate_operator(i)?);
        if let Some(model) = noise {
            for &q in &gate.qubits {
                m = model.channel(q).apply_on_qubit(&m, q, n);
            }
        }
        m = m.hermitian_part();
    }
    DensityMatrix::from_evolved(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::fidelity::state_fidelity;
    use crate::qcore::noise::{make_noise, KrausSet};
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn half_rotation_of_zero_state() {
        let c = CircuitSpec::new(1).with(GateKind::U3, &[0], &[0.0, 0.0, FRAC_PI_2]).unwrap();
        let out = apply_circuit_state(&StateVector::zero(1), &c).unwrap();
        let a = out.amplitudes();
        assert!((a[0].re - 0.70711).abs() < 1e-5 && (a[1].re - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = CircuitSpec::<f64>::new(2);
        assert_eq!(apply_circuit_state(&StateVector::zero(2), &c).unwrap(), StateVector::zero(2));
    }

    #[test]
    fn x_on_both_qubits_maps_00_to_11() {
        let c = CircuitSpec::<f64>::new(2)
            .with(GateKind::X, &[0], &[])
            .unwrap()
            .with(GateKind::X, &[1], &[])
            .unwrap();
        let out = apply_circuit_state(&StateVector::zero(2), &c).unwrap();
        assert!((out.probabilities()[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_respects_qubit_order() {
        // CNOT with control q2, target q0 on |001⟩ gives |101⟩.
        let c = CircuitSpec::<f64>::new(3).with(GateKind::CNOT, &[2, 0], &[]).unwrap();
        let out = apply_circuit_state(&StateVector::basis(3, 0b001), &c).unwrap();
        assert!((out.probabilities()[0b101] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_gates() {
        let mut c = CircuitSpec::<f64>::new(2);
        assert!(c.push(GateKind::CNOT, &[0, 0], &[]).is_err());
        assert!(c.push(GateKind::RX, &[2], &[0.1]).is_err());
        assert!(c.push(GateKind::RX, &[0], &[]).is_err());
        assert!(c.push(GateKind::H, &[0, 1], &[]).is_err());
    }

    #[test]
    fn density_evolution_matches_state_evolution() {
        let c = CircuitSpec::<f64>::new(2)
            .with(GateKind::U3, &[0], &[0.3, 1.2, 2.1])
            .unwrap()
            .with(GateKind::U3, &[1], &[2.3, 0.2, 0.9])
            .unwrap()
            .with(GateKind::CNOT, &[0, 1], &[])
            .unwrap()
            .with(GateKind::RY, &[1], &[PI / 3.0])
            .unwrap();
        let psi = apply_circuit_state(&StateVector::zero(2), &c).unwrap();
        let rho = apply_circuit_density(&DensityMatrix::zero(2), &c, None).unwrap();
        assert!(rho.matrix().max_abs_diff(psi.to_density().matrix()) < 1e-14);
        assert!((state_fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noisy_evolution_examples() {
        let x = CircuitSpec::<f64>::new(1).with(GateKind::X, &[0], &[]).unwrap();
        let out = apply_circuit_density(&DensityMatrix::zero(1), &x, None).unwrap();
        assert!(out.matrix().max_abs_diff(&CMatrix::from_real_diag(&[0.0, 1.0])) < 1e-15);

        // identity circuit realised as a zero-angle rotation so the noise fires once
        let idle = CircuitSpec::<f64>::new(1).with(GateKind::RX, &[0], &[0.0]).unwrap();
        let one = StateVector::basis(1, 1).to_density();
        for (gamma, expected) in [(1.0, [1.0, 0.0]), (0.5, [0.5, 0.5])] {
            let model = NoiseModel::uniform(1, make_noise(gamma, 0.0).unwrap());
            let out = apply_circuit_density(&one, &idle, Some(&model)).unwrap();
            assert!(out.matrix().max_abs_diff(&CMatrix::from_real_diag(&expected)) < 1e-15);
        }
    }

    #[test]
    fn noisy_evolution_preserves_trace() {
        let c = CircuitSpec::<f64>::new(3)
            .with(GateKind::H, &[0], &[])
            .unwrap()
            .with(GateKind::CNOT, &[0, 1], &[])
            .unwrap()
            .with(GateKind::CZ, &[1, 2], &[])
            .unwrap()
            .with(GateKind::U3, &[2], &[0.1, 0.2, 0.3])
            .unwrap();
        let model = NoiseModel::uniform(3, make_noise(0.1, 0.2).unwrap());
        let out = apply_circuit_density(&DensityMatrix::zero(3), &c, Some(&model)).unwrap();
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
        assert_eq!(out.matrix().hermiticity_error(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let c = CircuitSpec::<f64>::new(2);
        assert!(apply_circuit_state(&StateVector::zero(1), &c).is_err());
        let model = NoiseModel::uniform(1, KrausSet::identity(2));
        assert!(apply_circuit_density(&DensityMatrix::zero(2), &c, Some(&model)).is_err());
    }
}
