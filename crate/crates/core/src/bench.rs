//! Experiment harnesses: VQE by simplex descent, a two-qubit Grover search,
//! and per-record fidelity reports, each runnable on exact or surrogate
//! backends.
//!
//! Surrogate backends only know the half-block `RX·RZ·RX ⊗ RX·RZ·RX` then
//! `CNOT(0→1)`, so circuits are compiled into a chain of such blocks:
//! single-qubit products are re-expressed as XZX Euler angles, and a
//! trailing CNOT that the circuit does not contain is undone exactly on the
//! final state.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode_density, encode_state, hermitian_from_features, FeatureKind, Quantum};
use crate::datagen::{Circuit, Dataset};
use crate::error::{Error, Result};
use crate::extend3q::{simulate_3q, CnotDirection, ExactBackend, Inversion, Layer, SurrogateBackend};
use crate::qcore::{
    apply_circuit_density, cnot, euler_xzx, expectation, hadamard, mixed_fidelity, nearest_density_matrix, pauli, ry, state_fidelity, CMatrix, CircuitSpec, DensityMatrix, GateKind, NoiseModel, Observable,
    StateVector, C,
};
use crate::surrogate::SurrogateModel;

/// Where circuits are executed.
#[derive(Clone, Copy, Debug)]
pub enum Backend<'a> {
    /// Noiseless density-matrix simulation of the literal circuit.
    Exact,
    /// Literal circuit with a per-qubit noise channel after every gate.
    ExactNoisy(&'a NoiseModel<f64>),
    /// A trained two-qubit half-block model (`2q-universal`, noisy or not),
    /// chained block by block.
    Surrogate(&'a SurrogateModel),
    /// Three qubits through the block scheme over a two-qubit backend: the
    /// given noisy half-block model, or exact evolution when `None`.
    Extend3q { model: Option<&'a SurrogateModel>, noise: Option<&'a NoiseModel<f64>>, inversion: Inversion },
}

impl Backend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::ExactNoisy(_) => "exact-noisy",
            Self::Surrogate(_) => "surrogate",
            Self::Extend3q { model: None, .. } => "extend3q-exact",
            Self::Extend3q { model: Some(_), .. } => "extend3q-surrogate",
        }
    }
}

/// Parameterized circuits used by the VQE experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ansatz {
    /// `RY(θ1)` on q0, `CNOT(0→1)`, `RX(θ2)` on q1.
    TwoQubit,
    /// `RX·RZ·RX` on q0 and q1 (θ1..θ6), `CNOT(0→1)`, then `RX·RZ·RX` on q1
    /// and q2 (θ7..θ12), `CNOT(1→2)`.
    ThreeQubit,
}

impl Ansatz {
    pub fn n_qubits(self) -> usize {
        match self {
            Self::TwoQubit => 2,
            Self::ThreeQubit => 3,
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            Self::TwoQubit => 2,
            Self::ThreeQubit => 12,
        }
    }

    fn check(self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("ansatz parameters".into()));
        }
        Ok(())
    }

    pub fn circuit(self, params: &[f64]) -> Result<CircuitSpec<f64>> {
        self.check(params)?;
        match self {
            Self::TwoQubit => {
                let mut c = CircuitSpec::new(2);
                c.push(GateKind::RY, &[0], &params[0..1])?;
                c.push(GateKind::CNOT, &[0, 1], &[])?;
                c.push(GateKind::RX, &[1], &params[1..2])?;
                Ok(c)
            }
            Self::ThreeQubit => {
                let mut c = CircuitSpec::new(3);
                for l in self.layers(params)? {
                    l.push_gates(&mut c)?;
                }
                Ok(c)
            }
        }
    }

    /// The three-qubit ansatz as block layers.
    pub fn layers(self, params: &[f64]) -> Result<Vec<Layer>> {
        self.check(params)?;
        match self {
            Self::TwoQubit => Err(Error::InvalidParameter("the two-qubit ansatz has no 3-qubit layers".into())),
            Self::ThreeQubit => {
                let angles = |k: usize| std::array::from_fn(|i| params[6 * k + i]);
                Ok(vec![
                    Layer { pair: [0, 1], angles: angles(0), cnot_direction: CnotDirection::A },
                    Layer { pair: [1, 2], angles: angles(1), cnot_direction: CnotDirection::A },
                ])
            }
        }
    }

    /// The two-qubit ansatz as one half-block. `RY(θ1)` on q0 becomes its XZX
    /// Euler angles; `RX(θ2)` on the CNOT target commutes with the CNOT, so it
    /// takes the first q1 slot. The remaining angles are zero.
    pub fn blocks(self, params: &[f64]) -> Result<BlockProgram> {
        self.check(params)?;
        match self {
            Self::TwoQubit => {
                let (a, b, c) = euler_xzx(&ry(params[0]));
                Ok(BlockProgram { blocks: vec![[a, b, c, params[1], 0.0, 0.0]], undo_final_cnot: false })
            }
            Self::ThreeQubit => Err(Error::InvalidParameter("the three-qubit ansatz needs the extend3q backend".into())),
        }
    }
}

/// A two-qubit circuit as a chain of direction-A half-blocks starting from |00⟩.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockProgram {
    pub blocks: Vec<[f64; 6]>,
    /// The last block's CNOT is not part of the circuit.
    pub undo_final_cnot: bool,
}

impl BlockProgram {
    /// Compiles layers of single-qubit unitaries separated by `CNOT(0→1)`:
    /// `layers[0]`, CNOT, `layers[1]`, CNOT, …, `layers[n-1]`. Each entry
    /// lists the gates on (q0, q1) in circuit order.
    pub fn compile(layers: &[[Vec<CMatrix<f64>>; 2]]) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("empty block program".into()));
        }
        let product = |gates: &[CMatrix<f64>]| gates.iter().fold(CMatrix::identity(2), |acc, g| g.matmul(&acc));
        let blocks = layers
            .iter()
            .map(|[g0, g1]| {
                let (a, b, c) = euler_xzx(&product(g0));
                let (d, e, f) = euler_xzx(&product(g1));
                [a, b, c, d, e, f]
            })
            .collect();
        Ok(Self { blocks, undo_final_cnot: true })
    }

    /// Exact unitary of the program, for checking compilations.
    pub fn unitary(&self) -> Result<CMatrix<f64>> {
        let mut c = CircuitSpec::new(2);
        for a in &self.blocks {
            for q in 0..2 {
                c.push(GateKind::RX, &[q], &a[3 * q..3 * q + 1])?;
                c.push(GateKind::RZ, &[q], &a[3 * q + 1..3 * q + 2])?;
                c.push(GateKind::RX, &[q], &a[3 * q + 2..3 * q + 3])?;
            }
            c.push(GateKind::CNOT, &[0, 1], &[])?;
        }
        if self.undo_final_cnot {
            c.push(GateKind::CNOT, &[0, 1], &[])?;
        }
        c.unitary()
    }

    /// Runs the chain on a half-block model.
    pub fn run_surrogate(&self, model: &SurrogateModel) -> Result<Quantum<f64>> {
        let fam = model.family();
        if fam.circuit != Circuit::HalfblockA {
            return Err(Error::Backend(format!("{fam} is not a direction-A half-block family")));
        }
        let mut reg = if fam.noisy {
            Quantum::Density(DensityMatrix::zero(2))
        } else {
            Quantum::State(StateVector::zero(2))
        };
        for angles in &self.blocks {
            let mut x = match &reg {
                Quantum::State(s) => encode_state(s)?.values,
                Quantum::Density(d) => encode_density(d)?.values,
            };
            x.extend_from_slice(angles);
            let pred = model.forward(&x, None).map_err(|e| Error::Backend(e.to_string()))?;
            reg = decode_lenient(fam.target_kind(), &pred)?;
        }
        if self.undo_final_cnot {
            let g = cnot::<f64>();
            reg = match reg {
                Quantum::State(s) => Quantum::State(StateVector::new(matvec(&g, s.amplitudes()))?),
                Quantum::Density(d) => Quantum::Density(DensityMatrix::from_evolved(d.matrix().conjugate_by(&g))?),
            };
        }
        Ok(reg)
    }
}

fn matvec(m: &CMatrix<f64>, v: &[C<f64>]) -> Vec<C<f64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)] * v[c]).sum()).collect()
}

/// Decoding for chained blocks: a slightly off-norm state is renormalized and
/// an off-manifold density matrix projected instead of rejected.
fn decode_lenient(kind: FeatureKind, values: &[f64]) -> Result<Quantum<f64>> {
    if kind.is_density() {
        let dim = 1 << kind.n_qubits();
        let h = hermitian_from_features(values, dim)?;
        Ok(Quantum::Density(nearest_density_matrix(&h)))
    } else {
        let amps = values.chunks_exact(2).map(|p| C::new(p[0], p[1])).collect();
        Ok(Quantum::State(StateVector::normalized(amps)?))
    }
}

/// Final state of the ansatz at `params` on `backend`.
pub fn ansatz_state(ansatz: Ansatz, params: &[f64], backend: &Backend) -> Result<Quantum<f64>> {
    match (ansatz, backend) {
        (_, Backend::Exact) => Ok(Quantum::Density(apply_circuit_density(
            &DensityMatrix::zero(ansatz.n_qubits()),
            &ansatz.circuit(params)?,
            None,
        )?)),
        (_, Backend::ExactNoisy(noise)) => Ok(Quantum::Density(apply_circuit_density(
            &DensityMatrix::zero(ansatz.n_qubits()),
            &ansatz.circuit(params)?,
            Some(noise),
        )?)),
        (Ansatz::TwoQubit, Backend::Surrogate(model)) => ansatz.blocks(params)?.run_surrogate(model),
        (Ansatz::ThreeQubit, Backend::Extend3q { model, noise, inversion }) => {
            let layers = ansatz.layers(params)?;
            let rho = match model {
                Some(m) => simulate_3q(&layers, &SurrogateBackend::new(m)?, *inversion)?,
                None => simulate_3q(&layers, &ExactBackend { noise: noise.cloned() }, *inversion)?,
            };
            Ok(Quantum::Density(rho))
        }
        (a, b) => Err(Error::Backend(format!("backend {} cannot run the {a:?} ansatz", b.name()))),
    }
}

/// Nelder–Mead settings. Each restart starts from its own fixed simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Converged once a full cycle of `n + 1` iterations improves the best
    /// energy by less than this and the simplex energies span less than it.
    pub tolerance: f64,
    /// Edge length of the initial simplex, in radians.
    pub initial_step: f64,
    pub restarts: usize,
    /// Seeds the offsets of restarts after the first.
    pub restart_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { max_iterations: 2000, tolerance: 1e-6, initial_step: 0.5, restarts: 4, restart_seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct VqeProblem {
    pub hamiltonian: Observable<f64>,
    pub ansatz: Ansatz,
    pub initial: Vec<f64>,
    pub optimizer: OptimizerConfig,
}

impl VqeProblem {
    pub fn new(hamiltonian: Observable<f64>, ansatz: Ansatz, initial: Vec<f64>, optimizer: OptimizerConfig) -> Result<Self> {
        if hamiltonian.n_qubits() != ansatz.n_qubits() {
            return Err(Error::DimensionMismatch { expected: ansatz.n_qubits(), found: hamiltonian.n_qubits() });
        }
        ansatz.check(&initial)?;
        if optimizer.restarts == 0 || optimizer.max_iterations == 0 || !(optimizer.initial_step > 0.0) {
            return Err(Error::InvalidParameter("optimizer needs restarts, iterations and a positive step".into()));
        }
        Ok(Self { hamiltonian, ansatz, initial, optimizer })
    }

    /// `XX + YY + ZZ` with the two-parameter ansatz.
    pub fn two_qubit() -> Self {
        let h = Observable::pauli_sum(&["XX", "YY", "ZZ"]).expect("valid Pauli sum");
        Self::new(h, Ansatz::TwoQubit, vec![0.1, 0.1], OptimizerConfig::default()).expect("valid problem")
    }

    /// `XXX + YYY + ZZZ` with the twelve-parameter ansatz.
    pub fn three_qubit() -> Self {
        let h = Observable::pauli_sum(&["XXX", "YYY", "ZZZ"]).expect("valid Pauli sum");
        let opt = OptimizerConfig { max_iterations: 6000, ..OptimizerConfig::default() };
        Self::new(h, Ansatz::ThreeQubit, vec![0.1; 12], opt).expect("valid problem")
    }

    /// Smallest eigenvalue of the Hamiltonian.
    pub fn reference_energy(&self) -> f64 {
        self.hamiltonian.ground_energy()
    }

    /// Starting point of restart `k`: the initial parameters for `k = 0`,
    /// otherwise shifted by a fixed pseudo-random offset in `[-π, π)`.
    pub fn start(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            return self.initial.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.optimizer.restart_seed);
        rng.set_stream(k as u64);
        let pi = std::f64::consts::PI;
        self.initial.iter().map(|x| x + rng.gen_range(-pi..pi)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub restart: usize,
    pub iteration: usize,
    pub params: Vec<f64>,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub restart: usize,
    pub evaluations: Vec<Evaluation>,
    /// Best simplex vertex energy after each iteration.
    pub best_trace: Vec<f64>,
    pub best_params: Vec<f64>,
    pub best_energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqeTrace {
    pub backend: String,
    pub restarts: Vec<RestartResult>,
    /// Index of the restart with the lowest energy.
    pub best_restart: usize,
    pub final_params: Vec<f64>,
    pub final_energy: f64,
    pub iterations: usize,
    /// False when the winning restart stopped at the iteration cap.
    pub converged: bool,
    pub reference_energy: f64,
}

impl VqeTrace {
    pub fn best(&self) -> &RestartResult {
        &self.restarts[self.best_restart]
    }
}

/// Minimizes `⟨H⟩` over the ansatz parameters on `backend`.
pub fn vqe_run(problem: &VqeProblem, backend: &Backend) -> Result<VqeTrace> {
    let energy = |p: &[f64]| -> Result<f64> {
        let e = match ansatz_state(problem.ansatz, p, backend)? {
            Quantum::State(s) => expectation(&s, &problem.hamiltonian)?,
            Quantum::Density(d) => expectation(&d, &problem.hamiltonian)?,
        };
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::NonFinite("energy".into()))
        }
    };
    let restarts = (0..problem.optimizer.restarts)
        .into_par_iter()
        .map(|k| nelder_mead(&energy, &problem.start(k), &problem.optimizer, k))
        .collect::<Result<Vec<_>>>()?;
    let best_restart = (0..restarts.len())
        .min_by(|&a, &b| restarts[a].best_energy.total_cmp(&restarts[b].best_energy))
        .expect("at least one restart");
    let b = &restarts[best_restart];
    Ok(VqeTrace {
        backend: backend.name().into(),
        best_restart,
        final_params: b.best_params.clone(),
        final_energy: b.best_energy,
        iterations: b.iterations,
        converged: b.converged,
        reference_energy: problem.reference_energy(),
        restarts,
    })
}

/// Nelder–Mead with standard coefficients (1, 2, ½, ½).
pub fn nelder_mead<F>(f: &F, x0: &[f64], cfg: &OptimizerConfig, restart: usize) -> Result<RestartResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut evaluations = Vec::new();
    let mut iteration = 0;
    let eval = |p: Vec<f64>, iteration: usize, evaluations: &mut Vec<Evaluation>| -> Result<(Vec<f64>, f64)> {
        let e = f(&p)?;
        evaluations.push(Evaluation { restart, iteration, params: p.clone(), energy: e });
        Ok((p, e))
    };
    let mut simplex = vec![eval(x0.to_vec(), 0, &mut evaluations)?];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += cfg.initial_step;
        simplex.push(eval(p, 0, &mut evaluations)?);
    }
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);
    let mut best_trace = Vec::new();
    let mut checkpoint = simplex[0].1;
    let mut converged = false;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while iteration < cfg.max_iterations {
        iteration += 1;
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let (xr, fr) = eval(lerp(&centroid, &worst.0, -1.0), iteration, &mut evaluations)?;
        if fr < simplex[0].1 {
            let (xe, fe) = eval(lerp(&centroid, &worst.0, -2.0), iteration, &mut evaluations)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                eval(lerp(&centroid, &xr, 0.5), iteration, &mut evaluations)?
            } else {
                eval(lerp(&centroid, &worst.0, 0.5), iteration, &mut evaluations)?
            };
            if fc < fr.min(worst.1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    *v = eval(lerp(&x_best, &v.0, 0.5), iteration, &mut evaluations)?;
                }
            }
        }
        sort(&mut simplex);
        best_trace.push(simplex[0].1);
        if iteration % (n + 1) == 0 {
            let spread = simplex[n].1 - simplex[0].1;
            if checkpoint - simplex[0].1 < cfg.tolerance && spread < cfg.tolerance {
                converged = true;
                break;
            }
            checkpoint = simplex[0].1;
        }
    }
    let (best_params, best_energy) = simplex.swap_remove(0);
    Ok(RestartResult { restart, evaluations, best_trace, best_params, best_energy, iterations: iteration, converged })
}

/// One Grover iteration marking |11⟩: `H⊗H`, CZ, `H⊗H`, `X⊗X`, CZ, `X⊗X`, `H⊗H`.
pub fn grover_circuit() -> CircuitSpec<f64> {
    let mut c = CircuitSpec::new(2);
    let layer = |c: &mut CircuitSpec<f64>, k: GateKind| {
        c.push(k, &[0], &[]).expect("valid gate");
        c.push(k, &[1], &[]).expect("valid gate");
    };
    let cz = |c: &mut CircuitSpec<f64>| {
        c.push(GateKind::CZ, &[0, 1], &[]).expect("valid gate");
    };
    layer(&mut c, GateKind::H);
    cz(&mut c);
    layer(&mut c, GateKind::H);
    layer(&mut c, GateKind::X);
    cz(&mut c);
    layer(&mut c, GateKind::X);
    layer(&mut c, GateKind::H);
    c
}

/// The Grover circuit as half-blocks, writing each CZ as `H·CNOT·H` on q1.
pub fn grover_blocks() -> BlockProgram {
    let h = hadamard::<f64>();
    let x = pauli::<f64>('X').expect("valid Pauli");
    let blocks = [
        [vec![h.clone()], vec![h.clone(), h.clone()]],
        [vec![h.clone(), x.clone()], vec![h.clone(), h.clone(), x.clone(), h.clone()]],
        [vec![x.clone(), h.clone()], vec![h.clone(), x, h]],
    ];
    BlockProgram::compile(&blocks).expect("non-empty program")
}

/// Computational-basis probabilities after one Grover iteration, ordered
/// |00⟩, |01⟩, |10⟩, |11⟩ with q0 the most significant bit.
pub fn grover_run(backend: &Backend) -> Result<Vec<f64>> {
    let probs = match backend {
        Backend::Exact => apply_circuit_density(&DensityMatrix::zero(2), &grover_circuit(), None)?.probabilities(),
        Backend::ExactNoisy(noise) => {
            apply_circuit_density(&DensityMatrix::zero(2), &grover_circuit(), Some(noise))?.probabilities()
        }
        Backend::Surrogate(model) => match grover_blocks().run_surrogate(model)? {
            Quantum::State(s) => s.probabilities(),
            Quantum::Density(d) => d.probabilities(),
        },
        Backend::Extend3q { .. } => return Err(Error::Backend("Grover runs on two-qubit backends".into())),
    };
    // Diagonals of a valid state are non-negative up to rounding.
    Ok(probs.into_iter().map(|p| p.max(0.0)).collect())
}

pub fn basis_label(index: usize, n_qubits: usize) -> String {
    (0..n_qubits).map(|q| if index >> (n_qubits - 1 - q) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Per-record fidelities of a model on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub family: String,
    /// Fidelity of each record; predictions that fail to decode score 0.
    pub fidelities: Vec<f64>,
    pub decode_failures: usize,
    pub mean: f64,
    pub min: f64,
}

impl FidelityReport {
    pub fn fraction_at_least(&self, threshold: f64) -> f64 {
        if self.fidelities.is_empty() {
            return 0.0;
        }
        self.fidelities.iter().filter(|&&f| f >= threshold).count() as f64 / self.fidelities.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["index", "fidelity"]).map_err(csv_err)?;
        for (i, f) in self.fidelities.iter().enumerate() {
            wtr.write_record([i.to_string(), format!("{f:.12}")]).map_err(csv_err)?;
        }
        let mut w = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        writeln!(w, "# family={}", self.family)?;
        writeln!(w, "# count={}", self.fidelities.len())?;
        writeln!(w, "# decode_failures={}", self.decode_failures)?;
        writeln!(w, "# mean={:.12}", self.mean)?;
        writeln!(w, "# min={:.12}", self.min)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn quantum_fidelity(a: &Quantum<f64>, b: &Quantum<f64>) -> Result<f64> {
    match (a, b) {
        (Quantum::State(x), Quantum::State(y)) => state_fidelity(x, y),
        _ => mixed_fidelity(&a.to_density(), &b.to_density()),
    }
}

pub fn fidelity_report(model: &SurrogateModel, data: &Dataset) -> Result<FidelityReport> {
    if model.family() != data.family() {
        return Err(Error::InvalidParameter(format!(
            "model family {} does not match dataset family {}",
            model.family(),
            data.family()
        )));
    }
    let inputs: Vec<Vec<f64>> = data.records.iter().map(|r| r.input.clone()).collect();
    let preds = model.predict_batch(&inputs)?;
    let kind = model.family().target_kind();
    let scored: Vec<Option<f64>> = preds
        .par_iter()
        .zip(&data.records)
        .map(|(p, r)| -> Result<Option<f64>> {
            let target = decode(&crate::codec::FeatureVector::new(kind, r.target.clone())?)?;
            Ok(decode(p).ok().and_then(|q| quantum_fidelity(&q, &target).ok()))
        })
        .collect::<Result<_>>()?;
    let decode_failures = scored.iter().filter(|s| s.is_none()).count();
    let fidelities: Vec<f64> = scored.into_iter().map(|s| s.unwrap_or(0.0)).collect();
    let (mean, min) = summary(&fidelities);
    Ok(FidelityReport { family: model.family().to_string(), fidelities, decode_failures, mean, min })
}

/// Mean and minimum; `(0, 0)` for an empty slice.
pub fn summary(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, min)
}

/// Every evaluation as one CSV row, followed by a summary in comment lines.
pub fn write_trace_csv<W: Write>(trace: &VqeTrace, w: W) -> Result<()> {
    let n = trace.final_params.len();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["restart".to_string(), "evaluation".into(), "iteration".into(), "energy".into()];
    header.extend((1..=n).map(|i| format!("theta{i}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for r in &trace.restarts {
        for (k, e) in r.evaluations.iter().enumerate() {
            let mut row = vec![e.restart.to_string(), k.to_string(), e.iteration.to_string(), format!("{:.12}", e.energy)];
            row.extend(e.params.iter().map(|p| format!("{p:.12}")));
            wtr.write_record(&row).map_err(csv_err)?;
        }
    }
    let mut w = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    writeln!(w, "# backend={}", trace.backend)?;
    writeln!(w, "# best_restart={}", trace.best_restart)?;
    writeln!(w, "# final_energy={:.12}", trace.final_energy)?;
    writeln!(w, "# reference_energy={:.12}", trace.reference_energy)?;
    writeln!(w, "# iterations={}", trace.iterations)?;
    writeln!(w, "# converged={}", trace.converged)?;
    let params: Vec<String> = trace.final_params.iter().map(|p| format!("{p:.12}")).collect();
    writeln!(w, "# final_params={}", params.join(";"))?;
    Ok(())
}

pub fn write_probabilities_csv<W: Write>(probs: &[f64], w: W) -> Result<()> {
    let n_qubits = probs.len().trailing_zeros() as usize;
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["state", "probability"]).map_err(csv_err)?;
    for (i, p) in probs.iter().enumerate() {
        wtr.write_record([basis_label(i, n_qubits), format!("{p:.12}")]).map_err(csv_err)?;
    }
    let mut w = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let argmax = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    writeln!(w, "# argmax={}", basis_label(argmax, n_qubits))?;
    writeln!(w, "# total={:.12}", probs.iter().sum::<f64>())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, DatasetConfig, Family};
    use crate::qcore::{apply_circuit_state, NoiseParams};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn same_up_to_phase(a: &CMatrix<f64>, b: &CMatrix<f64>) -> bool {
        // |tr(A†B)| = d exactly when B = e^{iφ}A for unitaries.
        (a.adjoint().matmul(b).trace().norm() - a.rows() as f64).abs() < 1e-9
    }

    #[test]
    fn ansatz_block_matches_circuit() {
        for &(t1, t2) in &[(0.3, -1.2), (2.5, 0.7), (-1.5708, 3.1)] {
            let u = Ansatz::TwoQubit.circuit(&[t1, t2]).unwrap().unitary().unwrap();
            let b = Ansatz::TwoQubit.blocks(&[t1, t2]).unwrap().unitary().unwrap();
            assert!(same_up_to_phase(&u, &b));
        }
    }

    #[test]
    fn grover_blocks_match_circuit() {
        let u = grover_circuit().unitary().unwrap();
        assert!(same_up_to_phase(&u, &grover_blocks().unitary().unwrap()));
    }

    #[test]
    fn grover_exact_finds_marked_state() {
        let p = grover_run(&Backend::Exact).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-10);
        // Independent statevector run of the same circuit.
        let psi = apply_circuit_state(&StateVector::zero(2), &grover_circuit()).unwrap();
        assert!((psi.amplitudes()[3].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grover_noisy_still_peaks() {
        let noise = NoiseModel::from_params(2, &[NoiseParams::default(); 2]).unwrap();
        let p = grover_run(&Backend::ExactNoisy(&noise)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(p.iter().all(|&x| x >= 0.0));
        let argmax = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(argmax, 3);
        assert!(p[3] < 1.0 - 1e-3);
    }

    #[test]
    fn vqe_two_qubit_exact_reaches_ground_energy() {
        let problem = VqeProblem::two_qubit();
        assert!((problem.reference_energy() + 3.0).abs() < 1e-12);
        let t = vqe_run(&problem, &Backend::Exact).unwrap();
        assert!((t.final_energy + 3.0).abs() < 1e-3, "{}", t.final_energy);
        assert!(t.converged);
        let again = vqe_run(&problem, &Backend::Exact).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn vqe_three_qubit_exact_matches_diagonalization() {
        let problem = VqeProblem::three_qubit();
        assert!((problem.reference_energy() + 3f64.sqrt()).abs() < 1e-9);
        let t = vqe_run(&problem, &Backend::Exact).unwrap();
        assert!((t.final_energy - problem.reference_energy()).abs() < 1e-2, "{}", t.final_energy);
    }

    #[test]
    fn extend3q_backend_agrees_with_exact() {
        let problem = VqeProblem::three_qubit();
        let params: Vec<f64> = (0..12).map(|i| 0.37 * i as f64 - 1.0).collect();
        let e = |b: &Backend| match ansatz_state(Ansatz::ThreeQubit, &params, b).unwrap() {
            Quantum::Density(d) => expectation(&d, &problem.hamiltonian).unwrap(),
            Quantum::State(s) => expectation(&s, &problem.hamiltonian).unwrap(),
        };
        let ext = Backend::Extend3q { model: None, noise: None, inversion: Inversion::Corrected };
        assert!((e(&Backend::Exact) - e(&ext)).abs() < 1e-10);
    }

    #[test]
    fn backend_mismatch_is_an_error() {
        assert!(ansatz_state(Ansatz::TwoQubit, &[0.0, 0.0], &Backend::Extend3q {
            model: None,
            noise: None,
            inversion: Inversion::Naive
        })
        .is_err());
        let fam: Family = "1q".parse().unwrap();
        let model = SurrogateModel::new(crate::ModelConfig::for_family(fam), fam, crate::surrogate::Normalization::identity(fam.input_len(), fam.output_len())).unwrap();
        assert!(grover_run(&Backend::Surrogate(&model)).is_err());
    }

    #[test]
    fn nelder_mead_minimizes_quadratic() {
        let f = |p: &[f64]| Ok((p[0] - 1.0).powi(2) + 10.0 * (p[1] + 2.0).powi(2));
        let r = nelder_mead(&f, &[0.0, 0.0], &OptimizerConfig::default(), 0).unwrap();
        assert!(r.converged);
        assert!((r.best_params[0] - 1.0).abs() < 1e-2 && (r.best_params[1] + 2.0).abs() < 1e-2);
        let capped = OptimizerConfig { max_iterations: 3, ..OptimizerConfig::default() };
        let r = nelder_mead(&f, &[0.0, 0.0], &capped, 0).unwrap();
        assert!(!r.converged && r.iterations == 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn best_vertex_energy_never_increases(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let problem = VqeProblem::two_qubit();
            let energy = |p: &[f64]| match ansatz_state(Ansatz::TwoQubit, p, &Backend::Exact)? {
                Quantum::Density(d) => expectation(&d, &problem.hamiltonian),
                Quantum::State(s) => expectation(&s, &problem.hamiltonian),
            };
            let r = nelder_mead(&energy, &[a, b], &OptimizerConfig::default(), 0).unwrap();
            prop_assert!(r.best_trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(r.evaluations.iter().all(|e| e.energy.is_finite()));
        }
    }

    #[test]
    fn fidelity_report_csv_and_mismatch() {
        let fam: Family = "1q".parse().unwrap();
        let data = generate_dataset(&DatasetConfig::new(fam, 20, 5)).unwrap();
        let model = SurrogateModel::new(crate::ModelConfig::for_family(fam), fam, crate::surrogate::Normalization::identity(fam.input_len(), fam.output_len())).unwrap();
        let rep = fidelity_report(&model, &data).unwrap();
        assert_eq!(rep.fidelities.len(), 20);
        assert!(rep.fidelities.iter().all(|f| (0.0..=1.0 + 1e-9).contains(f)));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,fidelity\n"));
        assert!(text.contains("# mean=") && text.contains("# min="));

        let other: Family = "1q-noisy".parse().unwrap();
        let other_data = generate_dataset(&DatasetConfig::new(other, 5, 5)).unwrap();
        assert!(fidelity_report(&model, &other_data).is_err());
    }

    #[test]
    fn csv_outputs_have_headers() {
        let mut buf = Vec::new();
        write_probabilities_csv(&[0.0, 0.0, 0.0, 1.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("state,probability\n00,"));
        assert!(text.contains("# argmax=11"));
        let problem = VqeProblem { optimizer: OptimizerConfig { max_iterations: 5, ..Default::default() }, ..VqeProblem::two_qubit() };
        let t = vqe_run(&problem, &Backend::Exact).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("restart,evaluation,iteration,energy,theta1,theta2\n"));
        let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows, t.restarts.iter().map(|r| r.evaluations.len()).sum::<usize>());
    }
}
