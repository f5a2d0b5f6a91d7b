use crate::error::{Error, Result};
use crate::qcore::matrix::CMatrix;
use crate::qcore::state::{DensityMatrix, StateVector, PSD_TOL};
use crate::scalar::Real;

/// `|⟨φ|φ'⟩|²`.
pub fn state_fidelity<T: Real>(a: &StateVector<T>, b: &StateVector<T>) -> Result<T> {
    Ok(a.inner(b)?.norm_sqr().min(T::one()))
}

/// Eigenvalues within rounding noise of zero are zeroed before taking
/// square roots; otherwise `√(1e-16)` would leak 1e-8 into the fidelity.
fn noise_floor<T: Real>(values: &[T]) -> T {
    let scale = values.iter().fold(T::one(), |m, &l| m.max(l.abs()));
    T::epsilon() * T::lit(4.0 * values.len() as f64) * scale
}

fn clamp_eigenvalue<T: Real>(l: T, floor: T) -> Result<T> {
    if l < -T::tol(PSD_TOL) {
        return Err(Error::NotPsd(l.as_f64()));
    }
    Ok(if l <= floor { T::zero() } else { l })
}

/// Principal square root of a PSD matrix. Eigenvalues in `[-1e-8, 0)` are
/// clamped to zero; lower ones are an error.
pub fn sqrt_psd<T: Real>(m: &CMatrix<T>) -> Result<CMatrix<T>> {
    let eig = m.eigh();
    let floor = noise_floor(&eig.values);
    for &l in &eig.values {
        clamp_eigenvalue(l, floor)?;
    }
    Ok(eig.reassemble_with(|l| if l <= floor { T::zero() } else { l.sqrt() }))
}

/// `(tr √(√ρ σ √ρ))²`.
pub fn mixed_fidelity<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> Result<T> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let root = sqrt_psd(rho.matrix())?;
    let inner = root.matmul(sigma.matrix()).matmul(&root);
    let eig = inner.eigh();
    let floor = noise_floor(&eig.values);
    let mut tr = T::zero();
    for &l in &eig.values {
        tr = tr + clamp_eigenvalue(l, floor)?.sqrt();
    }
    Ok((tr * tr).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::matrix::C;
    use proptest::prelude::*;

    fn random_density(seed: &[f64]) -> DensityMatrix<f64> {
        // ρ = A A† / tr for a seeded 2×2 complex A
        let a = CMatrix::from_pairs(2, 2, &[(seed[0], seed[1]), (seed[2], seed[3]), (seed[4], seed[5]), (seed[6], seed[7])]);
        let m = a.matmul(&a.adjoint());
        let tr = m.trace().re;
        DensityMatrix::new(m.scale_real(1.0 / tr).hermitian_part()).unwrap()
    }

    #[test]
    fn pure_state_examples() {
        let zero = StateVector::<f64>::zero(1);
        let one = StateVector::<f64>::basis(1, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(vec![C::new(h, 0.0), C::new(h, 0.0)]).unwrap();
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(state_fidelity(&zero, &one).unwrap(), 0.0);
        assert!((state_fidelity(&zero, &plus).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixed_state_examples() {
        let zero = DensityMatrix::<f64>::zero(1);
        let one = StateVector::<f64>::basis(1, 1).to_density();
        let mixed = DensityMatrix::<f64>::maximally_mixed(1);
        assert!((mixed_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(mixed_fidelity(&zero, &one).unwrap().abs() < 1e-12);
        assert!((mixed_fidelity(&zero, &mixed).unwrap() - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mixed_fidelity_is_symmetric(a in proptest::collection::vec(-1.0f64..1.0, 8),
                                       b in proptest::collection::vec(-1.0f64..1.0, 8)) {
            prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            prop_assume!(b.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            let (r, s) = (random_density(&a), random_density(&b));
            let f1 = mixed_fidelity(&r, &s).unwrap();
            let f2 = mixed_fidelity(&s, &r).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-8, "{f1} vs {f2}");
            prop_assert!((0.0..=1.0).contains(&f1));
        }

        #[test]
        fn mixed_fidelity_reduces_to_overlap_for_pure_states(a in proptest::collection::vec(-1.0f64..1.0, 4),
                                                             b in proptest::collection::vec(-1.0f64..1.0, 4)) {
            prop_assume!(a.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            prop_assume!(b.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            let p = StateVector::normalized(vec![C::new(a[0], a[1]), C::new(a[2], a[3])]).unwrap();
            let q = StateVector::normalized(vec![C::new(b[0], b[1]), C::new(b[2], b[3])]).unwrap();
            let pure = state_fidelity(&p, &q).unwrap();
            let mixed = mixed_fidelity(&p.to_density(), &q.to_density()).unwrap();
            prop_assert!((pure - mixed).abs() < 1e-8, "{pure} vs {mixed}");
        }
    }
}
