//! Three-qubit simulation from a two-qubit backend.
//!
//! An 8×8 state is split on the qubit the layer does not touch into four
//! 4×4 blocks. The diagonal blocks and the Hermitian combinations
//! `S = ρ01 + ρ10`, `D = i(ρ01 − ρ10)` are each shifted and scaled into a
//! valid density matrix, pushed through the backend, mapped back and
//! reassembled. For a linear backend with the right identity image this is
//! exact.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_density, encode_density, FeatureVector};
use crate::datagen::{family_circuit, Circuit};
use crate::error::{Error, Result};
use crate::qcore::{
    apply_circuit_density, nearest_density_matrix, CMatrix, CircuitSpec, DensityMatrix, GateKind, HermitianMatrix,
    NoiseModel, C,
};
use crate::scalar::Real;
use crate::surrogate::SurrogateModel;

/// Which qubit the block decomposition factors out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QubitPairCase {
    /// Layer on (1, 2); blocks are the contiguous quadrants.
    FactorQ0,
    /// Layer on (0, 1); blocks interleave with stride 2.
    FactorQ2,
    /// Layer on (0, 2); the middle qubit selects the block.
    FactorQ1,
}

impl QubitPairCase {
    pub fn for_pair(pair: [usize; 2]) -> Result<Self> {
        let mut p = pair;
        p.sort_unstable();
        match p {
            [1, 2] => Ok(Self::FactorQ0),
            [0, 1] => Ok(Self::FactorQ2),
            [0, 2] => Ok(Self::FactorQ1),
            _ => Err(Error::InvalidParameter(format!("qubit pair {pair:?} is not two distinct qubits of three"))),
        }
    }

    /// Row of the 8×8 matrix for factored-qubit value `s` and block row `x`
    /// (block rows order the remaining qubits ascending, lower one first).
    pub fn full_index(self, s: usize, x: usize) -> usize {
        match self {
            Self::FactorQ0 => s * 4 + x,
            Self::FactorQ2 => x * 2 + s,
            Self::FactorQ1 => (x >> 1) * 4 + s * 2 + (x & 1),
        }
    }

    /// The two remaining qubits, ascending.
    pub fn pair(self) -> [usize; 2] {
        match self {
            Self::FactorQ0 => [1, 2],
            Self::FactorQ2 => [0, 1],
            Self::FactorQ1 => [0, 2],
        }
    }
}

/// The four 4×4 blocks `ρ^{ab}` of an 8×8 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSet<T> {
    pub rho00: CMatrix<T>,
    pub rho01: CMatrix<T>,
    pub rho10: CMatrix<T>,
    pub rho11: CMatrix<T>,
    pub case: QubitPairCase,
}

pub fn decompose<T: Real>(rho: &CMatrix<T>, case: QubitPairCase) -> Result<BlockSet<T>> {
    if rho.rows() != 8 || rho.cols() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, found: rho.rows() });
    }
    let block = |a: usize, b: usize| CMatrix::from_fn(4, 4, |x, y| rho[(case.full_index(a, x), case.full_index(b, y))]);
    Ok(BlockSet { rho00: block(0, 0), rho01: block(0, 1), rho10: block(1, 0), rho11: block(1, 1), case })
}

pub fn recompose<T: Real>(blocks: &BlockSet<T>) -> CMatrix<T> {
    let mut m = CMatrix::zeros(8, 8);
    let parts = [(0, 0, &blocks.rho00), (0, 1, &blocks.rho01), (1, 0, &blocks.rho10), (1, 1, &blocks.rho11)];
    for (a, b, blk) in parts {
        for x in 0..4 {
            for y in 0..4 {
                m[(blocks.case.full_index(a, x), blocks.case.full_index(b, y))] = blk[(x, y)];
            }
        }
    }
    m
}

const CONJUGACY_TOL: f64 = 1e-6;

/// `S = ρ01 + ρ10`, `D = i(ρ01 − ρ10)`, both Hermitian when `ρ10 = ρ01†`.
pub fn hermitize<T: Real>(rho01: &CMatrix<T>, rho10: &CMatrix<T>) -> Result<(HermitianMatrix<T>, HermitianMatrix<T>)> {
    let gap = rho10.max_abs_diff(&rho01.adjoint());
    if gap > T::lit(CONJUGACY_TOL) {
        return Err(Error::InvalidState(format!("off-diagonal blocks are not conjugate (gap {:e})", gap.as_f64())));
    }
    let i = C::new(T::zero(), T::one());
    let s = rho01 + rho10;
    let d = (rho01 - rho10).scale(i);
    Ok((HermitianMatrix::symmetrized(&s), HermitianMatrix::symmetrized(&d)))
}

/// Inverse of [`hermitize`]: `ρ01 = (S − iD)/2`, `ρ10 = (S + iD)/2`.
pub fn reblocks<T: Real>(s: &CMatrix<T>, d: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>) {
    let half = T::lit(0.5);
    let id = d.scale(C::new(T::zero(), T::one()));
    ((s - &id).scale_real(half), (s + &id).scale_real(half))
}

/// Affine map `M ↦ αM + βI` that made a block a density matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning<T> {
    pub alpha: T,
    pub beta: T,
}

/// `αM + βI` with `β = (1 − α·tr M)/4` and `α = min(½, 0.9·α_max)`, where
/// `α_max = 1/(tr M − 4λ_min)` is the largest scale keeping the result PSD.
pub fn condition<T: Real>(m: &HermitianMatrix<T>) -> (DensityMatrix<T>, Conditioning<T>) {
    let mat = m.matrix();
    let n = T::lit(mat.rows() as f64);
    let tr = mat.trace().re;
    let spread = tr - n * mat.eigh().min();
    let half = T::lit(0.5);
    let alpha = if spread > T::zero() { half.min(T::lit(0.9) / spread) } else { half };
    let beta = (T::one() - alpha * tr) / n;
    let out = &mat.scale_real(alpha) + &CMatrix::identity(mat.rows()).scale_real(beta);
    let rho = DensityMatrix::from_evolved(out.clone()).unwrap_or_else(|_| nearest_density_matrix(&HermitianMatrix::symmetrized(&out)));
    (rho, Conditioning { alpha, beta })
}

/// `(M' − β·E_I)/α`, where `E_I` is the backend's image of the identity.
pub fn uncondition<T: Real>(out: &CMatrix<T>, c: &Conditioning<T>, identity_image: &CMatrix<T>) -> Result<HermitianMatrix<T>> {
    if c.alpha == T::zero() {
        return Err(Error::InvalidParameter("conditioning with alpha = 0 cannot be inverted".into()));
    }
    let m = (out - &identity_image.scale_real(c.beta)).scale_real(T::one() / c.alpha);
    Ok(HermitianMatrix::symmetrized(&m))
}

/// CNOT orientation inside a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CnotDirection {
    /// Control on the first qubit of the pair.
    A,
    /// Control on the second qubit of the pair.
    B,
}

impl CnotDirection {
    fn flipped(self) -> Self {
        match self {
            Self::A => Self::B,
            Self::B => Self::A,
        }
    }

    pub fn circuit(self) -> Circuit {
        match self {
            Self::A => Circuit::HalfblockA,
            Self::B => Circuit::HalfblockB,
        }
    }
}

/// One two-qubit layer: `RX·RZ·RX` on `pair[0]` (angles 0–2) and `pair[1]`
/// (angles 3–5), then a CNOT.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub pair: [usize; 2],
    pub angles: [f64; 6],
    pub cnot_direction: CnotDirection,
}

impl Layer {
    /// The same layer with the pair listed ascending.
    fn ascending(&self) -> (QubitPairCase, [f64; 6], CnotDirection) {
        let case = QubitPairCase::for_pair(self.pair).expect("validated pair");
        if self.pair[0] < self.pair[1] {
            (case, self.angles, self.cnot_direction)
        } else {
            let a = self.angles;
            (case, [a[3], a[4], a[5], a[0], a[1], a[2]], self.cnot_direction.flipped())
        }
    }

    pub fn validate(&self) -> Result<()> {
        QubitPairCase::for_pair(self.pair)?;
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("layer angles".into()));
        }
        Ok(())
    }

    /// Gates of this layer on a 3-qubit register.
    pub fn push_gates<T: Real>(&self, c: &mut CircuitSpec<T>) -> Result<()> {
        for (k, &q) in self.pair.iter().enumerate() {
            let a = &self.angles[3 * k..3 * k + 3];
            c.push(GateKind::RX, &[q], &[T::lit(a[0])])?;
            c.push(GateKind::RZ, &[q], &[T::lit(a[1])])?;
            c.push(GateKind::RX, &[q], &[T::lit(a[2])])?;
        }
        let cn = match self.cnot_direction {
            CnotDirection::A => [self.pair[0], self.pair[1]],
            CnotDirection::B => [self.pair[1], self.pair[0]],
        };
        c.push(GateKind::CNOT, &cn, &[])?;
        Ok(())
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let pairs = [[0, 1], [1, 0], [1, 2], [2, 1], [0, 2], [2, 0]];
        let pair = pairs[rng.gen_range(0..pairs.len())];
        let angles = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
        let cnot_direction = if rng.gen_bool(0.5) { CnotDirection::A } else { CnotDirection::B };
        Self { pair, angles, cnot_direction }
    }
}

/// Whole 3-qubit circuit as one gate list, for direct simulation.
pub fn direct_circuit<T: Real>(layers: &[Layer]) -> Result<CircuitSpec<T>> {
    let mut c = CircuitSpec::new(3);
    for l in layers {
        l.validate()?;
        l.push_gates(&mut c)?;
    }
    Ok(c)
}

/// Reference: the full 8×8 evolution, noise on every touched qubit.
pub fn simulate_direct<T: Real>(layers: &[Layer], noise: Option<&NoiseModel<T>>) -> Result<DensityMatrix<T>> {
    apply_circuit_density(&DensityMatrix::zero(3), &direct_circuit(layers)?, noise)
}

/// Maps a 2-qubit density matrix through one layer. Block coordinates put
/// the lower-numbered physical qubit first; `qubits` names them.
pub trait TwoQubitBackend<T: Real>: Sync {
    fn apply(&self, rho: &DensityMatrix<T>, angles: &[f64; 6], direction: CnotDirection, qubits: [usize; 2]) -> Result<DensityMatrix<T>>;
}

/// Exact evolution, optionally with a per-qubit noise model over the whole
/// 3-qubit register (restricted to the pair on each call) or over 2 qubits.
#[derive(Clone, Debug)]
pub struct ExactBackend<T> {
    pub noise: Option<NoiseModel<T>>,
}

impl<T: Real> TwoQubitBackend<T> for ExactBackend<T> {
    fn apply(&self, rho: &DensityMatrix<T>, angles: &[f64; 6], direction: CnotDirection, qubits: [usize; 2]) -> Result<DensityMatrix<T>> {
        let a: Vec<T> = angles.iter().map(|&x| T::lit(x)).collect();
        let circuit = family_circuit(direction.circuit(), &a)?;
        let noise = self.noise.as_ref().map(|n| if n.n_qubits() == 2 { n.clone() } else { n.restrict(&qubits) });
        apply_circuit_density(rho, &circuit, noise.as_ref())
    }
}

/// A trained surrogate of a density-in, density-out half-block family.
/// Layers whose CNOT points the other way run the model on the
/// qubit-swapped state with the angle halves exchanged.
#[derive(Clone, Copy, Debug)]
pub struct SurrogateBackend<'a> {
    model: &'a SurrogateModel,
    direction: CnotDirection,
}

impl<'a> SurrogateBackend<'a> {
    pub fn new(model: &'a SurrogateModel) -> Result<Self> {
        let fam = model.family();
        let direction = match fam.circuit {
            Circuit::HalfblockA => CnotDirection::A,
            Circuit::HalfblockB => CnotDirection::B,
            _ => return Err(Error::Backend(format!("{fam} is not a half-block family"))),
        };
        if !fam.noisy {
            return Err(Error::Backend(format!("{fam} takes pure states; blocks need a density-matrix family")));
        }
        Ok(Self { model, direction })
    }
}

fn swap_qubits(m: &CMatrix<f64>) -> CMatrix<f64> {
    let p = |i: usize| ((i & 1) << 1) | (i >> 1);
    CMatrix::from_fn(4, 4, |r, c| m[(p(r), p(c))])
}

impl TwoQubitBackend<f64> for SurrogateBackend<'_> {
    fn apply(&self, rho: &DensityMatrix<f64>, angles: &[f64; 6], direction: CnotDirection, _qubits: [usize; 2]) -> Result<DensityMatrix<f64>> {
        let swapped = direction != self.direction;
        let (input, ang) = if swapped {
            let a = angles;
            (DensityMatrix::from_evolved(swap_qubits(rho.matrix()))?, [a[3], a[4], a[5], a[0], a[1], a[2]])
        } else {
            (rho.clone(), *angles)
        };
        let mut x = encode_density(&input)?.values;
        x.extend_from_slice(&ang);
        let pred: FeatureVector<f64> = self.model.predict(&x).map_err(|e| Error::Backend(e.to_string()))?;
        let out = decode_density(&pred)?;
        if swapped {
            Ok(nearest_density_matrix(&HermitianMatrix::symmetrized(&swap_qubits(out.matrix()))))
        } else {
            Ok(out)
        }
    }
}

/// How the identity shift is undone after the backend.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inversion {
    /// Subtract `β·E(I)` with `E(I) = 4·backend(I/4)`; exact for any linear channel.
    #[default]
    Corrected,
    /// Subtract `β·I`; exact only for unital channels.
    Naive,
}

pub fn apply_layer<T: Real, B: TwoQubitBackend<T>>(
    rho: &DensityMatrix<T>,
    layer: &Layer,
    backend: &B,
    inversion: Inversion,
) -> Result<DensityMatrix<T>> {
    layer.validate()?;
    if rho.n_qubits() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: rho.n_qubits() });
    }
    let (case, angles, dir) = layer.ascending();
    let qubits = case.pair();
    let blocks = decompose(rho.matrix(), case)?;
    let (s, d) = hermitize(&blocks.rho01, &blocks.rho10)?;
    let inputs = [
        HermitianMatrix::symmetrized(&blocks.rho00),
        HermitianMatrix::symmetrized(&blocks.rho11),
        s,
        d,
    ];
    let run = |m: Option<&HermitianMatrix<T>>| -> Result<(CMatrix<T>, Option<Conditioning<T>>)> {
        match m {
            Some(m) => {
                let (cond, c) = condition(m);
                Ok((backend.apply(&cond, &angles, dir, qubits)?.into_matrix(), Some(c)))
            }
            None => {
                let out = backend.apply(&DensityMatrix::maximally_mixed(2), &angles, dir, qubits)?;
                Ok((out.into_matrix().scale_real(T::lit(4.0)), None))
            }
        }
    };
    let mut jobs: Vec<Option<&HermitianMatrix<T>>> = inputs.iter().map(Some).collect();
    if inversion == Inversion::Corrected {
        jobs.push(None);
    }
    let outs = jobs.into_par_iter().map(run).collect::<Result<Vec<_>>>()?;
    let identity_image = match inversion {
        Inversion::Corrected => outs[4].0.clone(),
        Inversion::Naive => CMatrix::identity(4),
    };
    let mut back = Vec::with_capacity(4);
    for (m, c) in outs.iter().take(4) {
        back.push(uncondition(m, c.as_ref().expect("block job"), &identity_image)?.into_matrix());
    }
    let (rho01, rho10) = reblocks(&back[2], &back[3]);
    let full = recompose(&BlockSet { rho00: back[0].clone(), rho01, rho10, rho11: back[1].clone(), case });
    Ok(nearest_density_matrix(&HermitianMatrix::symmetrized(&full)))
}

/// Folds [`apply_layer`] over the layers, starting from `|000⟩⟨000|`.
pub fn simulate_3q<T: Real, B: TwoQubitBackend<T>>(layers: &[Layer], backend: &B, inversion: Inversion) -> Result<DensityMatrix<T>> {
    let mut rho = DensityMatrix::zero(3);
    for l in layers {
        rho = apply_layer(&rho, l, backend, inversion)?;
    }
    Ok(rho)
}

/// Reads a circuit file: a JSON array of layers.
pub fn load_layers(path: &std::path::Path) -> Result<Vec<Layer>> {
    let text = std::fs::read_to_string(path)?;
    let layers: Vec<Layer> = serde_json::from_str(&text)?;
    for l in &layers {
        l.validate()?;
    }
    Ok(layers)
}
