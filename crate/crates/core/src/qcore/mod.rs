//! Dense complex linear algebra and exact simulation of 1–3 qubit circuits.

pub mod circuit;
pub mod fidelity;
pub mod gates;
pub mod matrix;
pub mod noise;
pub mod projection;
pub mod state;

pub use circuit::{apply_circuit_density, apply_circuit_state, embed_operator, CircuitSpec, Gate};
pub use fidelity::{mixed_fidelity, sqrt_psd, state_fidelity};
pub use gates::{cnot, cz, euler_xzx, hadamard, pauli, rx, ry, rz, standard_gate, u_gate, GateKind};
pub use matrix::{CMatrix, HermitianEigen, C};
pub use noise::{amplitude_damping, depolarizing, make_noise, phase_damping, KrausSet, NoiseModel, NoiseParams};
pub use projection::{nearest_density_matrix, simplex_projection};
pub use state::{expectation, DensityMatrix, DensityRecord, Expectation, HermitianMatrix, Observable, StateVector};

/// Kronecker product `a ⊗ b`.
pub fn tensor<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kron(b)
}

use crate::scalar::Real;
