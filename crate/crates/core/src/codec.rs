//! Flat real feature vectors for states and density matrices.
//!
//! States are stored as interleaved `(re, im)` amplitudes. Density matrices
//! keep only the upper triangle, row by row: the real diagonal entry, then
//! `(re, im)` of every entry to its right. For two qubits that is 16 reals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::matrix::{CMatrix, C};
use crate::qcore::projection::nearest_density_matrix;
use crate::qcore::state::{DensityMatrix, HermitianMatrix, StateVector};
use crate::scalar::Real;

/// Decoded states with squared norm outside this band are rejected rather
/// than renormalized.
pub const RENORM_BAND: (f64, f64) = (0.9, 1.1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    #[serde(rename = "STATE_1Q")]
    State1Q,
    #[serde(rename = "RHO_1Q")]
    Rho1Q,
    #[serde(rename = "STATE_2Q")]
    State2Q,
    #[serde(rename = "RHO_2Q")]
    Rho2Q,
}

impl FeatureKind {
    pub fn len(self) -> usize {
        match self {
            Self::State1Q | Self::Rho1Q => 4,
            Self::State2Q => 8,
            Self::Rho2Q => 16,
        }
    }

    pub fn n_qubits(self) -> usize {
        match self {
            Self::State1Q | Self::Rho1Q => 1,
            Self::State2Q | Self::Rho2Q => 2,
        }
    }

    pub fn is_density(self) -> bool {
        matches!(self, Self::Rho1Q | Self::Rho2Q)
    }

    pub fn state(n_qubits: usize) -> Result<Self> {
        match n_qubits {
            1 => Ok(Self::State1Q),
            2 => Ok(Self::State2Q),
            n => Err(Error::InvalidParameter(format!("no state encoding for {n} qubits"))),
        }
    }

    pub fn density(n_qubits: usize) -> Result<Self> {
        match n_qubits {
            1 => Ok(Self::Rho1Q),
            2 => Ok(Self::Rho2Q),
            n => Err(Error::InvalidParameter(format!("no density encoding for {n} qubits"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    pub kind: FeatureKind,
    pub values: Vec<T>,
}

impl<T: Real> FeatureVector<T> {
    pub fn new(kind: FeatureKind, values: Vec<T>) -> Result<Self> {
        if values.len() != kind.len() {
            return Err(Error::DimensionMismatch { expected: kind.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind:?} features")));
        }
        Ok(Self { kind, values })
    }
}

/// Either side of the encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum Quantum<T> {
    State(StateVector<T>),
    Density(DensityMatrix<T>),
}

impl<T: Real> Quantum<T> {
    pub fn to_density(&self) -> DensityMatrix<T> {
        match self {
            Self::State(s) => s.to_density(),
            Self::Density(d) => d.clone(),
        }
    }
}

pub fn encode_state<T: Real>(psi: &StateVector<T>) -> Result<FeatureVector<T>> {
    let kind = FeatureKind::state(psi.n_qubits())?;
    let values = psi.amplitudes().iter().flat_map(|z| [z.re, z.im]).collect();
    Ok(FeatureVector { kind, values })
}

pub fn encode_density<T: Real>(rho: &DensityMatrix<T>) -> Result<FeatureVector<T>> {
    let kind = FeatureKind::density(rho.n_qubits())?;
    Ok(FeatureVector { kind, values: upper_triangle(rho.matrix()) })
}

pub fn encode<T: Real>(obj: &Quantum<T>) -> Result<FeatureVector<T>> {
    match obj {
        Quantum::State(s) => encode_state(s),
        Quantum::Density(d) => encode_density(d),
    }
}

fn upper_triangle<T: Real>(m: &CMatrix<T>) -> Vec<T> {
    let d = m.rows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(m[(i, i)].re);
        for j in i + 1..d {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

/// Hermitian matrix from the upper-triangle layout.
pub fn hermitian_from_features<T: Real>(values: &[T], dim: usize) -> Result<HermitianMatrix<T>> {
    if values.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, found: values.len() });
    }
    let mut m = CMatrix::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        m[(i, i)] = C::new(values[k], T::zero());
        k += 1;
        for j in i + 1..dim {
            let z = C::new(values[k], values[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    HermitianMatrix::new(m)
}

/// Amplitudes are rescaled to unit norm when the squared norm is within
/// [`RENORM_BAND`].
pub fn decode_state<T: Real>(f: &FeatureVector<T>) -> Result<StateVector<T>> {
    check(f, false)?;
    let amps: Vec<C<T>> = f.values.chunks_exact(2).map(|p| C::new(p[0], p[1])).collect();
    let norm: T = amps.iter().map(|z| z.norm_sqr()).sum();
    let (lo, hi) = RENORM_BAND;
    if norm < T::lit(lo) || norm > T::lit(hi) {
        return Err(Error::InvalidState(format!("decoded squared norm {norm} outside [{lo}, {hi}]")));
    }
    StateVector::normalized(amps)
}

/// Exact when the features describe a valid density matrix; otherwise the
/// nearest valid one.
pub fn decode_density<T: Real>(f: &FeatureVector<T>) -> Result<DensityMatrix<T>> {
    check(f, true)?;
    let herm = hermitian_from_features(&f.values, 1 << f.kind.n_qubits())?;
    match DensityMatrix::new(herm.matrix().clone()) {
        Ok(rho) => Ok(rho),
        Err(_) => Ok(nearest_density_matrix(&herm)),
    }
}

pub fn decode<T: Real>(f: &FeatureVector<T>) -> Result<Quantum<T>> {
    if f.kind.is_density() {
        decode_density(f).map(Quantum::Density)
    } else {
        decode_state(f).map(Quantum::State)
    }
}

fn check<T: Real>(f: &FeatureVector<T>, density: bool) -> Result<()> {
    if f.kind.is_density() != density {
        return Err(Error::InvalidParameter(format!("{:?} used with the wrong decoder", f.kind)));
    }
    if f.values.len() != f.kind.len() {
        return Err(Error::DimensionMismatch { expected: f.kind.len(), found: f.values.len() });
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{:?} features", f.kind)));
    }
    Ok(())
}

/// Multiplies by the phase that makes the largest amplitude real and
/// positive. Off by default everywhere; fidelities do not depend on it.
pub fn canonicalize_phase<T: Real>(psi: &StateVector<T>) -> StateVector<T> {
    let amps = psi.amplitudes();
    let lead = amps
        .iter()
        .copied()
        .fold(C::new(T::zero(), T::zero()), |best, z| if z.norm_sqr() > best.norm_sqr() { z } else { best });
    let phase = lead.conj().unscale(lead.norm());
    StateVector::normalized(amps.iter().map(|&z| z * phase).collect()).expect("unit vector stays unit")
}

/// Row-major `(re, im)` pairs, the on-disk matrix layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub dim: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixRecord {
    pub fn from_matrix<T: Real>(m: &CMatrix<T>) -> Self {
        Self { dim: m.rows(), data: m.data().iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect() }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMatrix<T>> {
        if self.data.len() != self.dim * self.dim {
            return Err(Error::Format(format!("{} entries for a {d}×{d} matrix", self.data.len(), d = self.dim)));
        }
        let pairs: Vec<(f64, f64)> = self.data.iter().map(|p| (p[0], p[1])).collect();
        Ok(CMatrix::from_pairs(self.dim, self.dim, &pairs))
    }
}
