//! Gate library.
//!
//! Rotations follow `R_P(θ) = exp(-iθP/2)`. The three-angle `U` gate uses
//! the parameterization
//!
//! ```text
//! U(θ1, θ2, θ3) = [ e^{i(θ1−θ2)/2} cos(θ3/2)   −e^{i(θ1+θ2)/2} sin(θ3/2) ]
//!                 [ e^{i(θ1−θ2)/2} sin(θ3/2)    e^{i(θ1+θ2)/2} cos(θ3/2) ]
//! ```
//!
//! which equals `e^{iθ1/2} · RY(θ3) · RZ(θ2)`; it is not the common U3.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::matrix::{cr, CMatrix, C};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    U3,
    RX,
    RY,
    RZ,
    H,
    X,
    CNOT,
    CZ,
}

impl GateKind {
    pub const ALL: [GateKind; 8] = [
        GateKind::U3,
        GateKind::RX,
        GateKind::RY,
        GateKind::RZ,
        GateKind::H,
        GateKind::X,
        GateKind::CNOT,
        GateKind::CZ,
    ];

    pub fn n_qubits(self) -> usize {
        match self {
            GateKind::CNOT | GateKind::CZ => 2,
            _ => 1,
        }
    }

    pub fn n_angles(self) -> usize {
        match self {
            GateKind::U3 => 3,
            GateKind::RX | GateKind::RY | GateKind::RZ => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::U3 => "U3",
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::CNOT => "CNOT",
            GateKind::CZ => "CZ",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.to_ascii_uppercase();
        GateKind::ALL
            .into_iter()
            .find(|k| k.name() == upper || (upper == "U" && *k == GateKind::U3) || (upper == "CX" && *k == GateKind::CNOT))
            .ok_or_else(|| Error::UnknownGate(s.to_string()))
    }
}

/// The three-angle `U` gate.
pub fn u_gate<T: Real>(t1: T, t2: T, t3: T) -> CMatrix<T> {
    let half = T::lit(0.5);
    let minus = Complex::from_polar(T::one(), half * (t1 - t2));
    let plus = Complex::from_polar(T::one(), half * (t1 + t2));
    let (s, c) = (half * t3).sin_cos();
    CMatrix::from_vec(2, 2, vec![minus.scale(c), -plus.scale(s), minus.scale(s), plus.scale(c)])
}

pub fn rx<T: Real>(theta: T) -> CMatrix<T> {
    let (s, c) = (theta * T::lit(0.5)).sin_cos();
    let z = T::zero();
    CMatrix::from_vec(2, 2, vec![C::new(c, z), C::new(z, -s), C::new(z, -s), C::new(c, z)])
}

pub fn ry<T: Real>(theta: T) -> CMatrix<T> {
    let (s, c) = (theta * T::lit(0.5)).sin_cos();
    let z = T::zero();
    CMatrix::from_vec(2, 2, vec![C::new(c, z), C::new(-s, z), C::new(s, z), C::new(c, z)])
}

pub fn rz<T: Real>(theta: T) -> CMatrix<T> {
    let half = theta * T::lit(0.5);
    let z = C::new(T::zero(), T::zero());
    CMatrix::from_vec(2, 2, vec![Complex::from_polar(T::one(), -half), z, z, Complex::from_polar(T::one(), half)])
}

pub fn hadamard<T: Real>() -> CMatrix<T> {
    let h = T::FRAC_1_SQRT_2();
    let z = T::zero();
    CMatrix::from_vec(2, 2, vec![C::new(h, z), C::new(h, z), C::new(h, z), C::new(-h, z)])
}

/// Single-qubit Pauli matrix by letter (`I`, `X`, `Y`, `Z`).
pub fn pauli<T: Real>(which: char) -> Result<CMatrix<T>> {
    let m = match which.to_ascii_uppercase() {
        'I' => CMatrix::identity(2),
        'X' => CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]),
        'Y' => CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (0.0, -1.0), (0.0, 1.0), (0.0, 0.0)]),
        'Z' => CMatrix::from_pairs(2, 2, &[(1.0, 0.0), (0.0, 0.0), (0.0, 0.0), (-1.0, 0.0)]),
        other => return Err(Error::InvalidParameter(format!("unknown Pauli `{other}`"))),
    };
    Ok(m)
}

/// CNOT with control on the first (more significant) qubit.
pub fn cnot<T: Real>() -> CMatrix<T> {
    let mut m = CMatrix::zeros(4, 4);
    for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(r, c)] = cr(1.0, 0.0);
    }
    m
}

pub fn cz<T: Real>() -> CMatrix<T> {
    CMatrix::from_real_diag(&[T::one(), T::one(), T::one(), -T::one()])
}

/// Matrix of a library gate. Two-qubit kinds act on `(first, second)` with
/// `first` the control for CNOT.
pub fn standard_gate<T: Real>(kind: GateKind, angles: &[T]) -> Result<CMatrix<T>> {
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
    Ok(match kind {
        GateKind::U3 => u_gate(angles[0], angles[1], angles[2]),
        GateKind::RX => rx(angles[0]),
        GateKind::RY => ry(angles[0]),
        GateKind::RZ => rz(angles[0]),
        GateKind::H => hadamard(),
        GateKind::X => pauli('X')?,
        GateKind::CNOT => cnot(),
        GateKind::CZ => cz(),
    })
}

/// Angles `(a, b, c)` with `U ≃ RX(c)·RZ(b)·RX(a)` up to global phase, i.e.
/// the single-qubit rotation run as RX, RZ, RX in circuit order.
pub fn euler_xzx<T: Real>(u: &CMatrix<T>) -> (T, T, T) {
    // Conjugating by H swaps X and Z: H·U·H = RZ(c)·RX(b)·RZ(a), whose entries are
    //   v00 = cos(b/2) e^{-i(a+c)/2},    v01 = -i sin(b/2) e^{i(a-c)/2},
    //   v10 = -i sin(b/2) e^{-i(a-c)/2}, v11 = cos(b/2) e^{i(a+c)/2}   (times e^{iγ}).
    let h = hadamard();
    let v = h.matmul(u).matmul(&h);
    let (v00, v01, v10, v11) = (v[(0, 0)], v[(0, 1)], v[(1, 0)], v[(1, 1)]);
    let b = T::lit(2.0) * v10.norm().atan2(v00.norm());
    let tiny = T::tol(1e-12);
    let half_pi = T::FRAC_PI_2();
    if v10.norm() <= tiny {
        (v11.arg() - v00.arg(), T::zero(), T::zero())
    } else if v00.norm() <= tiny {
        (v01.arg() - v10.arg(), b, T::zero())
    } else {
        let c = v10.arg() - v00.arg() + half_pi;
        let a = (v11.arg() - v00.arg()) - c;
        (a, b, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn u_gate_special_values() {
        assert!(u_gate(0.0, 0.0, 0.0).max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        let flip = CMatrix::from_pairs(2, 2, &[(0.0, 0.0), (-1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]);
        assert!(u_gate(0.0, 0.0, PI).max_abs_diff(&flip) < 1e-15);
        assert!(u_gate(0.3, 1.1, 2.0).is_unitary(1e-12));
    }

    #[test]
    fn u_gate_is_phase_times_ry_rz() {
        let (t1, t2, t3) = (0.7, -1.3, 2.2);
        let phase = Complex::from_polar(1.0, t1 / 2.0);
        let expected = ry(t3).matmul(&rz(t2)).scale(phase);
        assert!(u_gate(t1, t2, t3).max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn library_matches_standard_definitions() {
        let h = standard_gate::<f64>(GateKind::H, &[]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = CMatrix::from_pairs(2, 2, &[(s, 0.0), (s, 0.0), (s, 0.0), (-s, 0.0)]);
        assert!(h.max_abs_diff(&expected) < 1e-15);
        assert!(standard_gate::<f64>(GateKind::RX, &[0.0]).unwrap().max_abs_diff(&CMatrix::identity(2)) < 1e-15);
        let z = pauli::<f64>('Z').unwrap();
        assert!(z.kron(&z).max_abs_diff(&CMatrix::from_real_diag(&[1.0, -1.0, -1.0, 1.0])) < 1e-15);
        for kind in GateKind::ALL {
            let angles = vec![0.4; kind.n_angles()];
            assert!(standard_gate::<f64>(kind, &angles).unwrap().is_unitary(1e-12), "{kind}");
        }
    }

    #[test]
    fn cnot_truth_table() {
        let m = cnot::<f64>();
        let ket10 = vec![C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)];
        let out = m.mul_vec(&ket10);
        assert_eq!(out[3], C::new(1.0, 0.0));
    }

    #[test]
    fn unknown_kinds_and_wrong_arity_are_errors() {
        assert!(matches!("SWAP".parse::<GateKind>(), Err(Error::UnknownGate(_))));
        assert_eq!("cx".parse::<GateKind>().unwrap(), GateKind::CNOT);
        assert!(standard_gate::<f64>(GateKind::RX, &[]).is_err());
        assert!(standard_gate::<f64>(GateKind::RX, &[f64::NAN]).is_err());
    }

    #[test]
    fn rotations_are_unitary_for_many_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let a: [f64; 3] = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let u = u_gate(a[0], a[1], a[2]);
            let err = u.adjoint().matmul(&u).max_abs_diff(&CMatrix::identity(2));
            assert!(err < 1e-12);
        }
    }

    fn equal_up_to_phase(a: &CMatrix<f64>, b: &CMatrix<f64>) -> bool {
        let overlap = a.adjoint().matmul(b).trace();
        (overlap.norm() - 2.0).abs() < 1e-10
    }

    #[test]
    fn xzx_decomposition_reproduces_random_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut targets: Vec<CMatrix<f64>> = vec![hadamard(), ry(0.8), rx(1.1), pauli('X').unwrap(), pauli('Z').unwrap(), CMatrix::identity(2)];
        for _ in 0..200 {
            targets.push(u_gate(rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)));
        }
        for u in targets {
            let (a, b, c) = euler_xzx(&u);
            let rebuilt = rx(c).matmul(&rz(b)).matmul(&rx(a));
            assert!(equal_up_to_phase(&u, &rebuilt), "{u:?} -> {a} {b} {c}");
        }
    }
}
