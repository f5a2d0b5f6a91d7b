//! Validated quantum objects: pure states, density matrices, Hermitian
//! operators and observables.

use crate::error::{Error, Result};
use crate::qcore::matrix::{CMatrix, C};
use crate::scalar::Real;

pub const NORM_TOL: f64 = 1e-10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_TOL, 0)` are numerical noise; anything lower is a
/// genuinely indefinite matrix.
pub const PSD_TOL: f64 = 1e-8;

pub(crate) fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidState(format!("dimension {dim} is not 2^n with n ≥ 1")));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// File form of a density matrix: entries as `[re, im]` pairs in row-major order.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensityRecord {
    pub n_qubits: usize,
    pub entries: Vec<[f64; 2]>,
}

impl DensityRecord {
    pub fn from_density(rho: &DensityMatrix<f64>) -> Self {
        Self { n_qubits: rho.n_qubits(), entries: rho.matrix().data().iter().map(|z| [z.re, z.im]).collect() }
    }

    /// Validates every density-matrix invariant.
    pub fn to_density(&self) -> Result<DensityMatrix<f64>> {
        if self.n_qubits == 0 || self.n_qubits > 8 {
            return Err(Error::InvalidParameter(format!("unsupported qubit count {}", self.n_qubits)));
        }
        let dim = 1usize << self.n_qubits;
        if self.entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: self.entries.len() });
        }
        DensityMatrix::new(CMatrix::from_vec(dim, dim, self.entries.iter().map(|e| C::new(e[0], e[1])).collect()))
    }
}

/// Unit-norm amplitude vector over `2^n` basis states (qubit 0 is the most
/// significant bit of the basis index).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    n_qubits: usize,
    amps: Vec<C<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn new(amps: Vec<C<T>>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amps.len())?;
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitudes".into()));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<T>();
        if (norm - T::one()).abs() > T::tol(NORM_TOL) {
            return Err(Error::InvalidState(format!("squared norm {norm} differs from 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Scales `amps` to unit norm first.
    pub fn normalized(amps: Vec<C<T>>) -> Result<Self> {
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero or non-finite vector".into()));
        }
        Self::new(amps.into_iter().map(|z| z.unscale(norm)).collect())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let dim = 1usize << n_qubits;
        assert!(n_qubits >= 1 && index < dim, "basis index out of range");
        let mut amps = vec![C::new(T::zero(), T::zero()); dim];
        amps[index] = C::new(T::one(), T::zero());
        Self { n_qubits, amps }
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub(crate) fn from_unitary_image(n_qubits: usize, amps: Vec<C<T>>) -> Self {
        Self { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<C<T>> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .fold(C::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b))
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        let d = self.dim();
        let mut m = CMatrix::from_fn(d, d, |r, c| self.amps[r] * self.amps[c].conj());
        for i in 0..d {
            m[(i, i)].im = T::zero();
        }
        DensityMatrix { n_qubits: self.n_qubits, m }
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    n_qubits: usize,
    m: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates every density-matrix invariant.
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        let n_qubits = qubits_for_dim(m.rows())?;
        if !m.is_finite() {
            return Err(Error::NonFinite("density matrix".into()));
        }
        let herm = m.hermiticity_error();
        if herm > T::tol(HERMITIAN_TOL) {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {:e})", herm.as_f64())));
        }
        let tr = m.trace().re;
        if (tr - T::one()).abs() > T::tol(TRACE_TOL) {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let m = m.hermitian_part();
        let min = m.eigh().min();
        if min < -T::tol(PSD_TOL) {
            return Err(Error::NotPsd(min.as_f64()));
        }
        Ok(Self { n_qubits, m })
    }

    /// Symmetrizes before validating; used on outputs of evolution where
    /// rounding can leave a tiny anti-Hermitian residue.
    pub fn from_evolved(m: CMatrix<T>) -> Result<Self> {
        Self::new(m.hermitian_part())
    }

    /// `|0…0⟩⟨0…0|`.
    pub fn zero(n_qubits: usize) -> Self {
        StateVector::zero(n_qubits).to_density()
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        Self {
            n_qubits,
            m: CMatrix::identity(d).scale_real(T::one() / T::lit(d as f64)),
        }
    }

    pub(crate) fn from_trusted(m: CMatrix<T>) -> Self {
        let n_qubits = m.rows().trailing_zeros() as usize;
        Self { n_qubits, m }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    pub fn probabilities(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    pub fn purity(&self) -> T {
        self.m.matmul(&self.m).trace().re
    }

    pub fn min_eigenvalue(&self) -> T {
        self.m.eigh().min()
    }
}

/// Matrix equal to its conjugate transpose (within tolerance).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T>(CMatrix<T>);

impl<T: Real> HermitianMatrix<T> {
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.rows(), found: m.cols() });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("Hermitian matrix".into()));
        }
        let err = m.hermiticity_error();
        if err > T::tol(HERMITIAN_TOL) {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {:e})", err.as_f64())));
        }
        Ok(Self(m.hermitian_part()))
    }

    /// Takes the Hermitian part `(M + M†)/2` of an arbitrary square matrix.
    pub fn symmetrized(m: &CMatrix<T>) -> Self {
        assert!(m.is_square(), "square matrix required");
        Self(m.hermitian_part())
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

impl<T: Real> From<DensityMatrix<T>> for HermitianMatrix<T> {
    fn from(rho: DensityMatrix<T>) -> Self {
        Self(rho.m)
    }
}

/// Hermitian operator whose expectation value is measured.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable<T> {
    n_qubits: usize,
    h: HermitianMatrix<T>,
}

impl<T: Real> Observable<T> {
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        let n_qubits = qubits_for_dim(m.rows())?;
        Ok(Self { n_qubits, h: HermitianMatrix::new(m)? })
    }

    /// Sum of Pauli strings, e.g. `["XX", "YY", "ZZ"]`. Character `k` acts on qubit `k`.
    pub fn pauli_sum(terms: &[&str]) -> Result<Self> {
        let n = terms
            .first()
            .map(|t| t.len())
            .ok_or_else(|| Error::InvalidParameter("empty Pauli sum".into()))?;
        let mut acc = CMatrix::zeros(1 << n, 1 << n);
        for term in terms {
            if term.len() != n {
                return Err(Error::InvalidParameter(format!("Pauli string `{term}` has wrong length")));
            }
            let mut op = CMatrix::identity(1);
            for ch in term.chars() {
                op = op.kron(&crate::qcore::gates::pauli(ch)?);
            }
            acc = &acc + &op;
        }
        Self::new(acc)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        self.h.matrix()
    }

    /// Smallest eigenvalue by dense diagonalization.
    pub fn ground_energy(&self) -> T {
        self.h.matrix().eigh().min()
    }
}

/// Anything with a well-defined expectation value `⟨O⟩`.
pub trait Expectation<T: Real> {
    fn expectation(&self, obs: &Observable<T>) -> Result<T>;
}

impl<T: Real> Expectation<T> for StateVector<T> {
    fn expectation(&self, obs: &Observable<T>) -> Result<T> {
        if obs.matrix().rows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: obs.matrix().rows() });
        }
        let o_psi = obs.matrix().mul_vec(&self.amps);
        let value = self
            .amps
            .iter()
            .zip(&o_psi)
            .fold(C::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
        Ok(value.re)
    }
}

impl<T: Real> Expectation<T> for DensityMatrix<T> {
    fn expectation(&self, obs: &Observable<T>) -> Result<T> {
        if obs.matrix().rows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: obs.matrix().rows() });
        }
        Ok(self.m.matmul(obs.matrix()).trace().re)
    }
}

/// `tr(ρO)` or `⟨ψ|O|ψ⟩`; the imaginary residue is discarded.
pub fn expectation<T: Real, S: Expectation<T>>(state: &S, obs: &Observable<T>) -> Result<T> {
    state.expectation(obs)
}
