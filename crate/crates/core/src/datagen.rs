//! Random circuit families, exact targets, and the JSONL dataset format.

use std::f64::consts::TAU;
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{canonicalize_phase, encode_density, encode_state, FeatureKind};
use crate::error::{Error, Result};
use crate::qcore::circuit::{apply_circuit_density, apply_circuit_state, CircuitSpec};
use crate::qcore::gates::GateKind;
use crate::qcore::matrix::{CMatrix, C};
use crate::qcore::noise::{NoiseModel, NoiseParams};
use crate::qcore::state::{DensityMatrix, StateVector};
use crate::scalar::Real;

pub const FORMAT_VERSION: u32 = 1;

/// Gate template shared by every record of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Circuit {
    /// One U gate on one qubit.
    OneQ,
    /// U on each qubit, CNOT(0→1), U on each qubit again.
    TwoQSpecial,
    /// RX·RZ·RX on each qubit, then CNOT with control q0.
    HalfblockA,
    /// As [`Circuit::HalfblockA`] with control q1.
    HalfblockB,
}

impl Circuit {
    pub fn n_qubits(self) -> usize {
        match self {
            Self::OneQ => 1,
            _ => 2,
        }
    }

    pub fn n_angles(self) -> usize {
        match self {
            Self::OneQ => 3,
            Self::TwoQSpecial => 12,
            Self::HalfblockA | Self::HalfblockB => 6,
        }
    }

    pub fn takes_initial_state(self) -> bool {
        matches!(self, Self::HalfblockA | Self::HalfblockB)
    }
}

/// Circuit template plus whether targets are noisy density matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Family {
    pub circuit: Circuit,
    pub noisy: bool,
}

impl Family {
    pub const ALL_NAMES: [&'static str; 8] = [
        "1q",
        "1q-noisy",
        "2q-special",
        "2q-special-noisy",
        "2q-universal",
        "2q-universal-noisy",
        "2q-universal-b",
        "2q-universal-b-noisy",
    ];

    pub fn new(circuit: Circuit, noisy: bool) -> Self {
        Self { circuit, noisy }
    }

    pub fn target_kind(self) -> FeatureKind {
        let n = self.circuit.n_qubits();
        if self.noisy {
            FeatureKind::density(n).expect("1 or 2 qubits")
        } else {
            FeatureKind::state(n).expect("1 or 2 qubits")
        }
    }

    /// Length of the model input: initial-state features (if any), then angles.
    pub fn input_len(self) -> usize {
        self.state_prefix_len() + self.circuit.n_angles()
    }

    pub fn state_prefix_len(self) -> usize {
        if self.circuit.takes_initial_state() {
            self.target_kind().len()
        } else {
            0
        }
    }

    pub fn output_len(self) -> usize {
        self.target_kind().len()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.circuit {
            Circuit::OneQ => "1q",
            Circuit::TwoQSpecial => "2q-special",
            Circuit::HalfblockA => "2q-universal",
            Circuit::HalfblockB => "2q-universal-b",
        };
        if self.noisy {
            write!(f, "{base}-noisy")
        } else {
            f.write_str(base)
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, noisy) = match s.strip_suffix("-noisy") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let circuit = match base {
            "1q" => Circuit::OneQ,
            "2q-special" => Circuit::TwoQSpecial,
            "2q-universal" | "2q-universal-a" => Circuit::HalfblockA,
            "2q-universal-b" => Circuit::HalfblockB,
            _ => return Err(Error::InvalidParameter(format!("unknown family {s:?}"))),
        };
        Ok(Self { circuit, noisy })
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Angles i.i.d. uniform on `[0, 2π)`.
pub fn sample_angles<R: Rng + ?Sized>(circuit: Circuit, rng: &mut R) -> Vec<f64> {
    (0..circuit.n_angles()).map(|_| rng.gen_range(0.0..TAU)).collect()
}

pub fn family_circuit<T: Real>(circuit: Circuit, angles: &[T]) -> Result<CircuitSpec<T>> {
    if angles.len() != circuit.n_angles() {
        return Err(Error::DimensionMismatch { expected: circuit.n_angles(), found: angles.len() });
    }
    let mut c = CircuitSpec::new(circuit.n_qubits());
    match circuit {
        Circuit::OneQ => {
            c.push(GateKind::U3, &[0], angles)?;
        }
        Circuit::TwoQSpecial => {
            c.push(GateKind::U3, &[0], &angles[0..3])?;
            c.push(GateKind::U3, &[1], &angles[3..6])?;
            c.push(GateKind::CNOT, &[0, 1], &[])?;
            c.push(GateKind::U3, &[0], &angles[6..9])?;
            c.push(GateKind::U3, &[1], &angles[9..12])?;
        }
        Circuit::HalfblockA | Circuit::HalfblockB => {
            for q in 0..2 {
                let a = &angles[3 * q..3 * q + 3];
                c.push(GateKind::RX, &[q], &a[0..1])?;
                c.push(GateKind::RZ, &[q], &a[1..2])?;
                c.push(GateKind::RX, &[q], &a[2..3])?;
            }
            let pair = if circuit == Circuit::HalfblockA { [0, 1] } else { [1, 0] };
            c.push(GateKind::CNOT, &pair, &[])?;
        }
    }
    Ok(c)
}

/// How per-qubit noise parameters are chosen for a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum NoiseConfig {
    Uniform(NoiseParams),
    /// Each qubit gets its own `γ`, `λ` drawn once per dataset from the
    /// ranges, plus a shared depolarizing term.
    Realistic { gamma: (f64, f64), lambda: (f64, f64), depol: f64 },
}

impl NoiseConfig {
    pub fn realistic() -> Self {
        Self::Realistic { gamma: (0.01, 0.05), lambda: (0.01, 0.05), depol: 0.01 }
    }

    pub fn resolve(&self, n_qubits: usize, master_seed: u64) -> Vec<NoiseParams> {
        match *self {
            Self::Uniform(p) => vec![p; n_qubits],
            Self::Realistic { gamma, lambda, depol } => {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(u64::MAX);
                (0..n_qubits)
                    .map(|_| {
                        let g = if gamma.1 > gamma.0 { rng.gen_range(gamma.0..gamma.1) } else { gamma.0 };
                        let l = if lambda.1 > lambda.0 { rng.gen_range(lambda.0..lambda.1) } else { lambda.0 };
                        NoiseParams::new(g, l, depol)
                    })
                    .collect()
            }
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::Uniform(NoiseParams::default())
    }
}

/// Initial state of the universal (half-block) families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialStateMode {
    /// Always `|00⟩`.
    Fixed,
    /// A random special-family circuit applied to `|00⟩`.
    #[default]
    Random,
    /// `w·σ + (1 − w)·I/4` with `w ~ U[0, 1)` and `σ` either a random
    /// special-circuit state or a random-rank Ginibre state. Noisy only.
    RandomMixed,
}

impl FromStr for InitialStateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "random" => Ok(Self::Random),
            "random-mixed" => Ok(Self::RandomMixed),
            _ => Err(Error::InvalidParameter(format!("unknown initial-state mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub family: Family,
    pub count: usize,
    pub noise: NoiseConfig,
    pub master_seed: u64,
    pub initial_state: InitialStateMode,
    /// Rotate each pure target so its largest amplitude is real positive.
    #[serde(default)]
    pub canonical_phase: bool,
}

impl DatasetConfig {
    pub fn new(family: Family, count: usize, master_seed: u64) -> Self {
        Self {
            family,
            count,
            noise: NoiseConfig::default(),
            master_seed,
            initial_state: InitialStateMode::Random,
            canonical_phase: false,
        }
    }
}

/// First line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub family: Family,
    /// Nominal parameters (qubit 0 for per-qubit noise).
    pub noise: NoiseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_qubit_noise: Option<Vec<NoiseParams>>,
    pub count: usize,
    pub master_seed: u64,
    pub initial_state: InitialStateMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub family: Family,
    pub seed: u64,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

/// SplitMix64 finalizer over `(master_seed, index)`.
pub fn record_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn noise_model(params: &[NoiseParams]) -> Result<NoiseModel<f64>> {
    NoiseModel::from_params(params.len(), params)
}

/// `A A† / tr` for a `4 × rank` complex Gaussian `A`.
fn ginibre_state<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> DensityMatrix<f64> {
    let normal = |rng: &mut R| {
        // Box–Muller
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let v: f64 = rng.gen_range(0.0..TAU);
        (-2.0 * u.ln()).sqrt() * v.cos()
    };
    let a = CMatrix::from_fn(4, rank, |_, _| C::new(normal(rng), normal(rng)));
    let m = a.matmul(&a.adjoint());
    let tr = m.trace().re;
    DensityMatrix::new(m.scale_real(1.0 / tr).hermitian_part()).expect("Gram matrix is a valid state")
}

enum Initial {
    Pure(StateVector<f64>),
    Mixed(DensityMatrix<f64>),
}

fn sample_initial<R: Rng + ?Sized>(
    mode: InitialStateMode,
    noise: Option<&NoiseModel<f64>>,
    rng: &mut R,
) -> Result<Initial> {
    let special = |rng: &mut R| -> Result<Initial> {
        let c = family_circuit(Circuit::TwoQSpecial, &sample_angles(Circuit::TwoQSpecial, rng))?;
        Ok(match noise {
            Some(model) => Initial::Mixed(apply_circuit_density(&DensityMatrix::zero(2), &c, Some(model))?),
            None => Initial::Pure(apply_circuit_state(&StateVector::zero(2), &c)?),
        })
    };
    match mode {
        InitialStateMode::Fixed => Ok(Initial::Pure(StateVector::zero(2))),
        InitialStateMode::Random => special(rng),
        InitialStateMode::RandomMixed => {
            if noise.is_none() {
                return Err(Error::InvalidParameter("random-mixed initial states need a noisy family".into()));
            }
            let sigma = if rng.gen_bool(0.5) {
                match special(rng)? {
                    Initial::Mixed(d) => d,
                    Initial::Pure(p) => p.to_density(),
                }
            } else {
                let rank = rng.gen_range(1..=4);
                ginibre_state(rng, rank)
            };
            let w: f64 = rng.gen_range(0.0..1.0);
            let mixed = &sigma.matrix().scale_real(w) + &CMatrix::identity(4).scale_real((1.0 - w) / 4.0);
            Ok(Initial::Mixed(DensityMatrix::new(mixed.hermitian_part())?))
        }
    }
}

fn make_record(cfg: &DatasetConfig, noise: Option<&NoiseModel<f64>>, index: u64) -> Result<DatasetRecord> {
    let seed = record_seed(cfg.master_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = cfg.family;
    let circuit = family.circuit;
    let mut input = Vec::with_capacity(family.input_len());
    let init = if circuit.takes_initial_state() {
        sample_initial(cfg.initial_state, noise, &mut rng)?
    } else {
        Initial::Pure(StateVector::zero(circuit.n_qubits()))
    };
    let angles = sample_angles(circuit, &mut rng);
    let spec = family_circuit(circuit, &angles)?;
    let target = if family.noisy {
        let rho0 = match init {
            Initial::Pure(p) => p.to_density(),
            Initial::Mixed(d) => d,
        };
        if circuit.takes_initial_state() {
            input.extend(encode_density(&rho0)?.values);
        }
        encode_density(&apply_circuit_density(&rho0, &spec, noise)?)?.values
    } else {
        let Initial::Pure(psi0) = init else {
            unreachable!("noiseless families only see pure initial states")
        };
        if circuit.takes_initial_state() {
            input.extend(encode_state(&psi0)?.values);
        }
        let mut out = apply_circuit_state(&psi0, &spec)?;
        if cfg.canonical_phase {
            out = canonicalize_phase(&out);
        }
        encode_state(&out)?.values
    };
    input.extend(angles);
    Ok(DatasetRecord { family, seed, input, target })
}

/// Runs every record on the exact backend. Output depends only on `cfg`,
/// not on thread count or scheduling.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.count == 0 {
        return Err(Error::InvalidParameter("dataset needs at least one record".into()));
    }
    let n_qubits = cfg.family.circuit.n_qubits();
    let params = if cfg.family.noisy { cfg.noise.resolve(n_qubits, cfg.master_seed) } else { vec![NoiseParams::none(); n_qubits] };
    let model = if cfg.family.noisy { Some(noise_model(&params)?) } else { None };
    let records = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| make_record(cfg, model.as_ref(), i))
        .collect::<Result<Vec<_>>>()?;
    let per_qubit = matches!(cfg.noise, NoiseConfig::Realistic { .. }) && cfg.family.noisy;
    let header = DatasetHeader {
        version: FORMAT_VERSION,
        family: cfg.family,
        noise: params[0],
        per_qubit_noise: per_qubit.then(|| params.clone()),
        count: cfg.count,
        master_seed: cfg.master_seed,
        initial_state: cfg.initial_state,
    };
    Ok(Dataset { header, records })
}

fn push_floats(line: &mut String, values: &[f64]) {
    line.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        write!(line, "{v:.16e}").expect("writing to a String");
    }
    line.push(']');
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn family(&self) -> Family {
        self.header.family
    }

    /// First `⌈fraction·n⌉` records for training, the rest for validation.
    pub fn split(&self, fraction: f64) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
        let cut = ((self.records.len() as f64) * fraction).ceil() as usize;
        let cut = cut.min(self.records.len());
        (self.records[..cut].to_vec(), self.records[cut..].to_vec())
    }

    pub fn noise_model(&self) -> Result<Option<NoiseModel<f64>>> {
        if !self.header.family.noisy {
            return Ok(None);
        }
        let n = self.header.family.circuit.n_qubits();
        let params = self.header.per_qubit_noise.clone().unwrap_or_else(|| vec![self.header.noise; n]);
        noise_model(&params).map(Some)
    }

    /// Header line, then one record per line, floats at 17 significant digits.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.header)?)?;
        let mut line = String::new();
        for r in &self.records {
            line.clear();
            write!(line, "{{\"family\":\"{}\",\"seed\":{},\"input\":", r.family, r.seed).expect("String write");
            push_floats(&mut line, &r.input);
            line.push_str(",\"target\":");
            push_floats(&mut line, &r.target);
            line.push('}');
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&first)?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Format(format!("dataset version {} (expected {FORMAT_VERSION})", header.version)));
        }
        let mut records = Vec::with_capacity(header.count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DatasetRecord = serde_json::from_str(&line)?;
            if rec.family != header.family
                || rec.input.len() != header.family.input_len()
                || rec.target.len() != header.family.output_len()
            {
                return Err(Error::Format(format!("record {} does not match family {}", records.len(), header.family)));
            }
            records.push(rec);
        }
        if records.len() != header.count {
            return Err(Error::Format(format!("header says {} records, found {}", header.count, records.len())));
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_density, FeatureVector};
    use crate::qcore::gates::cnot;

    fn small(family: &str, n: usize, seed: u64) -> Dataset {
        generate_dataset(&DatasetConfig::new(family.parse().unwrap(), n, seed)).unwrap()
    }

    #[test]
    fn family_names_round_trip() {
        for name in Family::ALL_NAMES {
            assert_eq!(name.parse::<Family>().unwrap().to_string(), name);
        }
        assert!("3q".parse::<Family>().is_err());
    }

    #[test]
    fn record_shapes_per_family() {
        for (name, m, k) in [
            ("1q", 3, 4),
            ("1q-noisy", 3, 4),
            ("2q-special", 12, 8),
            ("2q-special-noisy", 12, 16),
            ("2q-universal", 14, 8),
            ("2q-universal-noisy", 22, 16),
        ] {
            let ds = small(name, 3, 1);
            assert!(ds.records.iter().all(|r| r.input.len() == m && r.target.len() == k), "{name}");
        }
    }

    #[test]
    fn angle_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_angles(Circuit::OneQ, &mut rng).len(), 3);
        assert_eq!(sample_angles(Circuit::TwoQSpecial, &mut rng).len(), 12);
        assert_eq!(sample_angles(Circuit::HalfblockA, &mut rng).len(), 6);
    }

    #[test]
    fn zero_angle_templates() {
        assert!(family_circuit(Circuit::OneQ, &[0.0; 3]).unwrap().unitary().unwrap().max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        for c in [Circuit::TwoQSpecial, Circuit::HalfblockA] {
            let u = family_circuit(c, &vec![0.0; c.n_angles()]).unwrap().unitary().unwrap();
            assert!(u.max_abs_diff(&cnot()) < 1e-15);
        }
        let u = family_circuit(Circuit::HalfblockB, &[0.0; 6]).unwrap().unitary().unwrap();
        let expected = crate::qcore::circuit::embed_operator(&cnot::<f64>(), &[1, 0], 2);
        assert!(u.max_abs_diff(&expected) < 1e-15);
        assert!(family_circuit(Circuit::OneQ, &[0.0; 2]).is_err());
    }

    #[test]
    fn fixed_initial_state_with_zero_angles_stays_at_00() {
        let cfg = DatasetConfig { initial_state: InitialStateMode::Fixed, ..DatasetConfig::new("2q-universal".parse().unwrap(), 1, 0) };
        let rec = make_record(&cfg, None, 0).unwrap();
        assert_eq!(&rec.input[..8], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = family_circuit(Circuit::HalfblockA, &[0.0; 6]).unwrap();
        let out = apply_circuit_state(&StateVector::zero(2), &spec).unwrap();
        assert_eq!(out, StateVector::zero(2));
    }

    #[test]
    fn pure_targets_are_normalized() {
        let ds = small("1q", 200, 42);
        for r in &ds.records {
            let n: f64 = r.target.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_noise_matches_noiseless_density() {
        let cfg = DatasetConfig {
            noise: NoiseConfig::Uniform(NoiseParams::none()),
            ..DatasetConfig::new("1q-noisy".parse().unwrap(), 1, 9)
        };
        let rec = &generate_dataset(&cfg).unwrap().records[0];
        let spec = family_circuit(Circuit::OneQ, &rec.input).unwrap();
        let psi = apply_circuit_state(&StateVector::zero(1), &spec).unwrap();
        let expected = encode_density(&psi.to_density()).unwrap().values;
        for (a, b) in rec.target.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn noisy_targets_are_valid_without_repair() {
        for name in ["1q-noisy", "2q-special-noisy", "2q-universal-noisy"] {
            let ds = small(name, 50, 3);
            let kind = ds.family().target_kind();
            for r in &ds.records {
                let herm = crate::codec::hermitian_from_features(&r.target, 1 << kind.n_qubits()).unwrap();
                assert!(DensityMatrix::new(herm.into_matrix()).is_ok());
                decode_density(&FeatureVector::new(kind, r.target.clone()).unwrap()).unwrap();
            }
        }
    }

    #[test]
    fn random_mixed_inputs_are_valid_states() {
        let cfg = DatasetConfig {
            initial_state: InitialStateMode::RandomMixed,
            ..DatasetConfig::new("2q-universal-noisy".parse().unwrap(), 40, 5)
        };
        let ds = generate_dataset(&cfg).unwrap();
        for r in &ds.records {
            let herm = crate::codec::hermitian_from_features(&r.input[..16], 4).unwrap();
            assert!(DensityMatrix::new(herm.into_matrix()).is_ok());
        }
        let noiseless = DatasetConfig { family: "2q-universal".parse().unwrap(), ..cfg };
        assert!(generate_dataset(&noiseless).is_err());
    }

    #[test]
    fn angles_are_uniform_on_the_circle() {
        let ds = small("2q-special", 10_000, 17);
        for k in 0..12 {
            let mean = ds.records.iter().map(|r| r.input[k]).sum::<f64>() / 10_000.0;
            assert!((mean - std::f64::consts::PI).abs() < 0.1, "angle {k}: mean {mean}");
            assert!(ds.records.iter().all(|r| (0.0..TAU).contains(&r.input[k])));
        }
    }

    #[test]
    fn output_is_byte_identical_across_runs_and_thread_counts() {
        let cfg = DatasetConfig::new("2q-universal-noisy".parse().unwrap(), 64, 7);
        let mut a = Vec::new();
        generate_dataset(&cfg).unwrap().write_jsonl(&mut a).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let mut b = Vec::new();
        pool.install(|| generate_dataset(&cfg).unwrap().write_jsonl(&mut b).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_round_trip_is_lossless() {
        let cfg = DatasetConfig { noise: NoiseConfig::realistic(), ..DatasetConfig::new("1q-noisy".parse().unwrap(), 20, 11) };
        let ds = generate_dataset(&cfg).unwrap();
        assert!(ds.header.per_qubit_noise.is_some());
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let back = Dataset::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, ds);
        let text = String::from_utf8(buf).unwrap();
        let first_value = text.lines().nth(1).unwrap().split("\"input\":[").nth(1).unwrap().split(',').next().unwrap();
        let mantissa = first_value.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = small("1q", 3, 1);
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(Dataset::read_jsonl(cut.as_bytes()).is_err());
    }

    #[test]
    fn split_is_ninety_ten_by_index() {
        let ds = small("1q", 100, 1);
        let (train, val) = ds.split(0.9);
        assert_eq!((train.len(), val.len()), (90, 10));
        assert_eq!(train[0], ds.records[0]);
        assert_eq!(val[0], ds.records[90]);
    }
}
