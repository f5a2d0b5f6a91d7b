//! Kraus channels: amplitude damping (relaxation), phase damping
//! (dephasing) and depolarizing noise on single qubits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::circuit::embed_operator;
use crate::qcore::gates::pauli;
use crate::qcore::matrix::{CMatrix, C};
use crate::qcore::state::DensityMatrix;
use crate::scalar::Real;

pub const KRAUS_TOL: f64 = 1e-10;

/// Trace-preserving set of Kraus operators `{K_i}` with `Σ K_i†K_i = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet<T> {
    ops: Vec<CMatrix<T>>,
}

impl<T: Real> KrausSet<T> {
    pub fn new(ops: Vec<CMatrix<T>>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidParameter("empty Kraus set".into()))?;
        let d = first.rows();
        if ops.iter().any(|k| k.rows() != d || k.cols() != d) {
            return Err(Error::InvalidParameter("Kraus operators must share a square shape".into()));
        }
        let mut sum = CMatrix::zeros(d, d);
        for k in &ops {
            sum = &sum + &k.adjoint().matmul(k);
        }
        let dev = sum.max_abs_diff(&CMatrix::identity(d));
        if dev > T::tol(KRAUS_TOL) {
            return Err(Error::NotTracePreserving(dev.as_f64()));
        }
        Ok(Self { ops })
    }

    pub fn identity(dim: usize) -> Self {
        Self { ops: vec![CMatrix::identity(dim)] }
    }

    pub fn operators(&self) -> &[CMatrix<T>] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops[0].rows()
    }

    /// Channel applied first by `self`, then by `next`.
    pub fn then(&self, next: &Self) -> Self {
        let mut ops = Vec::with_capacity(self.ops.len() * next.ops.len());
        for b in &next.ops {
            for a in &self.ops {
                let k = b.matmul(a);
                if k.frobenius_norm() > T::zero() {
                    ops.push(k);
                }
            }
        }
        Self { ops }
    }

    /// `Σ K ρ K†` on the full matrix (channel dimension equals the matrix dimension).
    pub fn apply_full(&self, rho: &CMatrix<T>) -> CMatrix<T> {
        let d = rho.rows();
        let mut out = CMatrix::zeros(d, d);
        for k in &self.ops {
            out = &out + &rho.conjugate_by(k);
        }
        out
    }

    /// Applies a single-qubit channel to `qubit` of an `n`-qubit matrix.
    pub fn apply_on_qubit(&self, rho: &CMatrix<T>, qubit: usize, n_qubits: usize) -> CMatrix<T> {
        debug_assert_eq!(self.dim(), 2);
        let d = rho.rows();
        let mut out = CMatrix::zeros(d, d);
        for k in &self.ops {
            let full = embed_operator(k, &[qubit], n_qubits);
            out = &out + &rho.conjugate_by(&full);
        }
        out
    }

    pub fn apply(&self, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: rho.dim() });
        }
        DensityMatrix::from_evolved(self.apply_full(rho.matrix()))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

pub fn amplitude_damping<T: Real>(gamma: f64) -> Result<KrausSet<T>> {
    check_unit("gamma", gamma)?;
    let k0 = CMatrix::from_pairs(2, 2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), ((1.0 - gamma).sqrt(), 0.0)]);
    let k1 = CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (gamma.sqrt(), 0.0), (0.0, 0.0), (0.0, 0.0)]);
    KrausSet::new(vec![k0, k1])
}

pub fn phase_damping<T: Real>(lambda: f64) -> Result<KrausSet<T>> {
    check_unit("lambda", lambda)?;
    let k0 = CMatrix::from_pairs(2, 2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), ((1.0 - lambda).sqrt(), 0.0)]);
    let k1 = CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (lambda.sqrt(), 0.0)]);
    KrausSet::new(vec![k0, k1])
}

pub fn depolarizing<T: Real>(p: f64) -> Result<KrausSet<T>> {
    check_unit("depol", p)?;
    let mut ops = vec![CMatrix::identity(2).scale_real(T::lit((1.0 - 0.75 * p).sqrt()))];
    for ch in ['X', 'Y', 'Z'] {
        ops.push(pauli(ch)?.scale(C::new(T::lit((p / 4.0).sqrt()), T::zero())));
    }
    KrausSet::new(ops)
}

/// Amplitude damping with `γ` followed by phase damping with `λ`.
pub fn make_noise<T: Real>(gamma: f64, lambda: f64) -> Result<KrausSet<T>> {
    let ad = amplitude_damping(gamma)?;
    let pd = phase_damping(lambda)?;
    KrausSet::new(ad.then(&pd).ops)
}

/// Per-gate noise parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub gamma: f64,
    pub lambda: f64,
    #[serde(default)]
    pub depol: f64,
}

impl NoiseParams {
    pub const DEFAULT_GAMMA: f64 = 0.02;
    pub const DEFAULT_LAMBDA: f64 = 0.02;

    pub fn new(gamma: f64, lambda: f64, depol: f64) -> Self {
        Self { gamma, lambda, depol }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.gamma == 0.0 && self.lambda == 0.0 && self.depol == 0.0
    }

    pub fn kraus<T: Real>(&self) -> Result<KrausSet<T>> {
        let base = make_noise(self.gamma, self.lambda)?;
        if self.depol == 0.0 {
            return Ok(base);
        }
        check_unit("depol", self.depol)?;
        KrausSet::new(base.then(&depolarizing(self.depol)?).ops)
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::new(Self::DEFAULT_GAMMA, Self::DEFAULT_LAMBDA, 0.0)
    }
}

/// Channel applied to every qubit a gate touches, right after the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel<T> {
    per_qubit: Vec<KrausSet<T>>,
}

impl<T: Real> NoiseModel<T> {
    pub fn uniform(n_qubits: usize, channel: KrausSet<T>) -> Self {
        Self { per_qubit: vec![channel; n_qubits] }
    }

    pub fn per_qubit(channels: Vec<KrausSet<T>>) -> Self {
        Self { per_qubit: channels }
    }

    pub fn from_params(n_qubits: usize, params: &[NoiseParams]) -> Result<Self> {
        let channels = match params {
            [single] => vec![single.kraus()?; n_qubits],
            many if many.len() == n_qubits => many.iter().map(|p| p.kraus()).collect::<Result<_>>()?,
            _ => return Err(Error::InvalidParameter("noise params must be one or one per qubit".into())),
        };
        Ok(Self { per_qubit: channels })
    }

    pub fn n_qubits(&self) -> usize {
        self.per_qubit.len()
    }

    pub fn channel(&self, qubit: usize) -> &KrausSet<T> {
        &self.per_qubit[qubit]
    }

    /// Restriction to a subset of qubits (in the given order).
    pub fn restrict(&self, qubits: &[usize]) -> Self {
        Self { per_qubit: qubits.iter().map(|&q| self.per_qubit[q].clone()).collect() }
    }
}
