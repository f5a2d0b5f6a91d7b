//! Diagonal-only readout tomography: rotate by each of the `3^n` prefixes
//! built from {I, RX(π/2), RY(π/2)}, record the computational-basis
//! probabilities, solve the linear system for the `4^n` real density-matrix
//! parameters by least squares, then project onto the density matrices.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_density, hermitian_from_features};
use crate::datagen::record_seed;
use crate::error::{Error, Result};
use crate::qcore::{nearest_density_matrix, rx, ry, CMatrix, DensityMatrix, HermitianMatrix};

/// Relative size below which a diagonal entry of `R` counts as zero.
const RANK_TOL: f64 = 1e-10;
const PROB_FLOOR: f64 = -1e-9;
const PROB_SUM_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutOperation {
    /// One letter per qubit, qubit 0 first.
    pub label: String,
    pub unitary: CMatrix<f64>,
}

fn single(letter: char) -> CMatrix<f64> {
    let quarter = std::f64::consts::FRAC_PI_2;
    match letter {
        'X' => rx(quarter),
        'Y' => ry(quarter),
        _ => CMatrix::identity(2),
    }
}

/// All `3^n` prefixes in lexicographic label order (I < X < Y).
pub fn readout_ops(n_qubits: usize) -> Result<Vec<ReadoutOperation>> {
    if !(1..=2).contains(&n_qubits) {
        return Err(Error::InvalidParameter(format!("tomography supports 1 or 2 qubits, not {n_qubits}")));
    }
    let mut labels = vec![String::new()];
    for _ in 0..n_qubits {
        labels = labels.iter().flat_map(|l| ['I', 'X', 'Y'].map(|c| format!("{l}{c}"))).collect();
    }
    Ok(labels
        .into_iter()
        .map(|label| {
            let unitary = label.chars().map(single).reduce(|a, b| a.kron(&b)).expect("non-empty label");
            ReadoutOperation { label, unitary }
        })
        .collect())
}

/// Diagonal of `UρU†` for one readout prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRecord {
    pub label: String,
    pub probs: Vec<f64>,
    /// Number of shots behind `probs`; absent for exact probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    Exact,
    /// Multinomial frequencies from a generator seeded with `seed`.
    Sampled { shots: u64, seed: u64 },
}

pub fn measure_diagonals(rho: &DensityMatrix<f64>, op: &ReadoutOperation, shots: Shots) -> Result<ProbabilityRecord> {
    if op.unitary.rows() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: op.unitary.rows(), found: rho.dim() });
    }
    let rotated = rho.matrix().conjugate_by(&op.unitary);
    let exact: Vec<f64> = (0..rho.dim()).map(|k| rotated[(k, k)].re.max(0.0)).collect();
    let (probs, shots) = match shots {
        Shots::Exact => (exact, None),
        Shots::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(Error::InvalidParameter("shot count must be positive".into()));
            }
            let dist = WeightedIndex::new(&exact).map_err(|e| Error::InvalidState(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts = vec![0u64; exact.len()];
            for _ in 0..shots {
                counts[dist.sample(&mut rng)] += 1;
            }
            (counts.iter().map(|&c| c as f64 / shots as f64).collect(), Some(shots))
        }
    };
    Ok(ProbabilityRecord { label: op.label.clone(), probs, shots })
}

/// Every readout of `rho`; record `i` is sampled with seed
/// `record_seed(seed, i)`.
pub fn measure_all(rho: &DensityMatrix<f64>, shots: Option<u64>, seed: u64) -> Result<Vec<ProbabilityRecord>> {
    readout_ops(rho.n_qubits())?
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let mode = match shots {
                None => Shots::Exact,
                Some(s) => Shots::Sampled { shots: s, seed: record_seed(seed, i as u64) },
            };
            measure_diagonals(rho, op, mode)
        })
        .collect()
}

fn n_qubits_of(records: &[ProbabilityRecord]) -> Result<usize> {
    let first = records.first().ok_or_else(|| Error::InvalidParameter("no probability records".into()))?;
    match first.probs.len() {
        2 => Ok(1),
        4 => Ok(2),
        n => Err(Error::InvalidParameter(format!("{n} probabilities per record is not 1 or 2 qubits"))),
    }
}

/// Least-squares system `A x = b` over the real parameters of the density
/// encoding, one row per (readout, outcome). Column `k` is the diagonal of
/// `U B_k U†` for the Hermitian basis element `B_k` of parameter `k`.
pub fn build_system(records: &[ProbabilityRecord]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = n_qubits_of(records)?;
    let dim = 1usize << n;
    let ops = readout_ops(n)?;
    let n_par = dim * dim;
    let basis = (0..n_par)
        .map(|k| {
            let mut e = vec![0.0; n_par];
            e[k] = 1.0;
            hermitian_from_features(&e, dim)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut a = DMatrix::zeros(ops.len() * dim, n_par);
    let mut b = DVector::zeros(ops.len() * dim);
    for (oi, op) in ops.iter().enumerate() {
        let mut found = records.iter().filter(|r| r.label == op.label);
        let rec = found.next().ok_or_else(|| Error::InvalidParameter(format!("missing readout `{}`", op.label)))?;
        if found.next().is_some() {
            return Err(Error::InvalidParameter(format!("duplicate readout `{}`", op.label)));
        }
        validate_record(rec, dim)?;
        for (k, bk) in basis.iter().enumerate() {
            let img = bk.matrix().conjugate_by(&op.unitary);
            for j in 0..dim {
                a[(oi * dim + j, k)] = img[(j, j)].re;
            }
        }
        for j in 0..dim {
            b[oi * dim + j] = rec.probs[j];
        }
    }
    if records.len() != ops.len() {
        return Err(Error::InvalidParameter(format!("expected {} readouts, got {}", ops.len(), records.len())));
    }
    Ok((a, b))
}

fn validate_record(rec: &ProbabilityRecord, dim: usize) -> Result<()> {
    if rec.probs.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rec.probs.len() });
    }
    if rec.probs.iter().any(|p| !p.is_finite() || *p < PROB_FLOOR) {
        return Err(Error::InvalidState(format!("readout `{}` has invalid probabilities", rec.label)));
    }
    let sum: f64 = rec.probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidState(format!("readout `{}` probabilities sum to {sum}", rec.label)));
    }
    Ok(())
}

/// Numerical rank from the singular values.
pub fn system_rank(a: &DMatrix<f64>) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOL * top.max(1.0)).count()
}

/// Least-squares estimate via Householder QR; may be indefinite under
/// shot noise.
pub fn reconstruct(records: &[ProbabilityRecord]) -> Result<HermitianMatrix<f64>> {
    let (a, b) = build_system(records)?;
    let cols = a.ncols();
    let qr = a.qr();
    let r = qr.r();
    let top = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rank = (0..cols).filter(|&i| r[(i, i)].abs() > RANK_TOL * top.max(1.0)).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, needed: cols });
    }
    let qtb = qr.q().transpose() * b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, needed: cols })?;
    let dim = (cols as f64).sqrt() as usize;
    hermitian_from_features(x.as_slice(), dim)
}

/// Reconstruction followed by projection; always a valid state.
pub fn tomo_pipeline(records: &[ProbabilityRecord]) -> Result<DensityMatrix<f64>> {
    Ok(nearest_density_matrix(&reconstruct(records)?))
}

/// Real parameters of `rho` in the order used by [`build_system`].
pub fn parameters(rho: &DensityMatrix<f64>) -> Result<Vec<f64>> {
    Ok(encode_density(rho)?.values)
}

pub fn load_records(path: &std::path::Path) -> Result<Vec<ProbabilityRecord>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_records(path: &std::path::Path, records: &[ProbabilityRecord]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}
