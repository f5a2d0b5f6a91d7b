//! Exact simulation of small noisy quantum circuits, an attention-based
//! surrogate trained on it, a block scheme that stretches a two-qubit
//! surrogate to three qubits, and least-squares state tomography.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod bench;
pub mod codec;
pub mod datagen;
pub mod error;
pub mod extend3q;
pub mod qcore;
pub mod scalar;
pub mod surrogate;
pub mod tomo;

pub use error::{Error, Result};
pub use scalar::Real;
pub use surrogate::{ModelConfig, SurrogateModel, TrainReport};

pub type Complex = qcore::C<f64>;
pub type Matrix = qcore::CMatrix<f64>;
pub type StateVector = qcore::StateVector<f64>;
pub type DensityMatrix = qcore::DensityMatrix<f64>;
pub type HermitianMatrix = qcore::HermitianMatrix<f64>;
pub type Observable = qcore::Observable<f64>;
pub type KrausSet = qcore::KrausSet<f64>;
pub type NoiseModel = qcore::NoiseModel<f64>;
pub type CircuitSpec = qcore::CircuitSpec<f64>;
pub type FeatureVector = codec::FeatureVector<f64>;
