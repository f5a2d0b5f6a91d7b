//! Closest valid density matrix in Frobenius norm.
//!
//! Minimizing `‖X − M‖²` over `{X ⪰ 0, tr X = 1}` for Hermitian `M` keeps the
//! eigenvectors of `M` and replaces its spectrum by the Euclidean projection
//! of the eigenvalue vector onto the probability simplex.

use crate::qcore::state::{DensityMatrix, HermitianMatrix};
use crate::scalar::Real;

/// Euclidean projection of `v` onto `{w ≥ 0, Σw = 1}` by sort-and-threshold.
pub fn simplex_projection<T: Real>(v: &[T]) -> Vec<T> {
    assert!(!v.is_empty(), "simplex projection of an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = T::zero();
    let mut tau = T::zero();
    for (k, &u) in sorted.iter().enumerate() {
        cumsum = cumsum + u;
        let candidate = (cumsum - T::one()) / T::lit((k + 1) as f64);
        if u > candidate {
            tau = candidate;
        }
    }
    let mut w: Vec<T> = v.iter().map(|&x| (x - tau).max(T::zero())).collect();
    // one compensation pass so the sum is 1 to rounding
    let total: T = w.iter().copied().sum();
    let positive = w.iter().filter(|&&x| x > T::zero()).count();
    if positive > 0 && total != T::one() {
        let shift = (T::one() - total) / T::lit(positive as f64);
        for x in w.iter_mut().filter(|x| **x > T::zero()) {
            *x = (*x + shift).max(T::zero());
        }
    }
    w
}

/// Unique minimizer of `‖X − M‖_F` subject to `tr X = 1`, `X ⪰ 0`.
pub fn nearest_density_matrix<T: Real>(m: &HermitianMatrix<T>) -> DensityMatrix<T> {
    let eig = m.matrix().eigh();
    let projected = simplex_projection(&eig.values);
    let rebuilt = eig.reassemble(&projected);
    DensityMatrix::from_trusted(rebuilt.hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::matrix::CMatrix;
    use proptest::prelude::*;

    /// Grid search over the simplex; the oracle for the closed form.
    fn grid_projection(v: &[f64], steps: usize) -> Vec<f64> {
        let mut best = (f64::INFINITY, vec![]);
        let h = 1.0 / steps as f64;
        match v.len() {
            2 => {
                for i in 0..=steps {
                    let w = vec![i as f64 * h, 1.0 - i as f64 * h];
                    let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.0 {
                        best = (d, w);
                    }
                }
            }
            3 => {
                for i in 0..=steps {
                    for j in 0..=(steps - i) {
                        let w = vec![i as f64 * h, j as f64 * h, 1.0 - (i + j) as f64 * h];
                        let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
                        if d < best.0 {
                            best = (d, w);
                        }
                    }
                }
            }
            _ => unreachable!("grid oracle covers d = 2, 3"),
        }
        best.1
    }

    #[test]
    fn simplex_matches_fine_exhaustive_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 3] {
            for _ in 0..4 {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let oracle = grid_projection(&v, 10_000);
                let w = simplex_projection(&v);
                let dist: f64 = w.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist < 1e-4, "{v:?}: {w:?} vs {oracle:?}");
            }
        }
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(simplex_projection(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(simplex_projection(&[2.0, 0.0]), vec![1.0, 0.0]);
        let w = simplex_projection::<f64>(&[1.2, -0.2]);
        assert!((w[0] - 1.0).abs() < 1e-15 && w[1] == 0.0);
    }

    #[test]
    fn nearest_density_examples() {
        let m = HermitianMatrix::new(CMatrix::<f64>::from_real_diag(&[1.2, -0.2])).unwrap();
        let out = nearest_density_matrix(&m);
        assert!(out.matrix().max_abs_diff(&CMatrix::from_real_diag(&[1.0, 0.0])) < 1e-14);
        let m = HermitianMatrix::new(CMatrix::<f64>::from_real_diag(&[0.6, 0.6])).unwrap();
        let out = nearest_density_matrix(&m);
        assert!(out.matrix().max_abs_diff(&CMatrix::from_real_diag(&[0.5, 0.5])) < 1e-14);
    }

    #[test]
    fn valid_density_is_a_fixed_point() {
        let rho = CMatrix::<f64>::from_pairs(2, 2, &[(0.7, 0.0), (0.1, 0.2), (0.1, -0.2), (0.3, 0.0)]);
        let rho = DensityMatrix::new(rho).unwrap();
        let out = nearest_density_matrix(&HermitianMatrix::from(rho.clone()));
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-14);
    }

    proptest! {
        #[test]
        fn simplex_matches_grid_oracle(v in proptest::collection::vec(-2.0f64..2.0, 2..=3)) {
            let w = simplex_projection(&v);
            let oracle = grid_projection(&v, if v.len() == 2 { 200_000 } else { 2_000 });
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let dist: f64 = w.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dist < 1e-3, "{w:?} vs {oracle:?}");
            // the closed form is never worse than any grid point
            let d_closed: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            let d_grid: f64 = oracle.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(d_closed <= d_grid + 1e-12);
        }

        #[test]
        fn projection_is_idempotent_and_valid(entries in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let m = CMatrix::<f64>::from_pairs(2, 2, &[
                (entries[0], 0.0), (entries[1], entries[2]),
                (entries[1], -entries[2]), (entries[3], 0.0),
            ]);
            let once = nearest_density_matrix(&HermitianMatrix::new(m).unwrap());
            prop_assert!(DensityMatrix::new(once.matrix().clone()).is_ok());
            let twice = nearest_density_matrix(&HermitianMatrix::from(once.clone()));
            prop_assert!(twice.matrix().max_abs_diff(once.matrix()) < 1e-12);
        }

        /// For one qubit, `ρ = (I + r·σ)/2` and `‖ρ − M‖² = 2(½ − a)² + 2|r/2 − b|²`
        /// with `M = aI + b·σ`, so the minimizer clips `r = 2b` to the unit ball.
        #[test]
        fn nearest_density_matches_bloch_ball_oracle(e in proptest::collection::vec(-1.5f64..1.5, 4)) {
            let m = CMatrix::<f64>::from_pairs(2, 2, &[(e[0], 0.0), (e[1], e[2]), (e[1], -e[2]), (e[3], 0.0)]);
            let b = [e[1], -e[2], (e[0] - e[3]) / 2.0];
            let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt() * 2.0;
            let r: Vec<f64> = b.iter().map(|x| if norm > 1.0 { 2.0 * x / norm } else { 2.0 * x }).collect();
            let oracle = CMatrix::from_pairs(2, 2, &[
                ((1.0 + r[2]) / 2.0, 0.0), (r[0] / 2.0, -r[1] / 2.0),
                (r[0] / 2.0, r[1] / 2.0), ((1.0 - r[2]) / 2.0, 0.0),
            ]);
            let got = nearest_density_matrix(&HermitianMatrix::new(m).unwrap());
            prop_assert!((got.matrix() - &oracle).frobenius_norm() < 1e-10);
        }
    }

    /// Coarse-to-fine search over the Bloch ball, no algebra shared with the closed form.
    fn brute_force_nearest(m: &CMatrix<f64>) -> CMatrix<f64> {
        let dist = |r: [f64; 3]| {
            let rho = CMatrix::from_pairs(2, 2, &[
                ((1.0 + r[2]) / 2.0, 0.0), (r[0] / 2.0, -r[1] / 2.0),
                (r[0] / 2.0, r[1] / 2.0), ((1.0 - r[2]) / 2.0, 0.0),
            ]);
            ((&rho - m).frobenius_norm(), rho)
        };
        let mut center = [0.0; 3];
        let mut half = 1.0;
        for _ in 0..40 {
            let mut best = (f64::INFINITY, center);
            for i in -10..=10 {
                for j in -10..=10 {
                    for k in -10..=10 {
                        let mut r = [
                            center[0] + half * i as f64 / 10.0,
                            center[1] + half * j as f64 / 10.0,
                            center[2] + half * k as f64 / 10.0,
                        ];
                        // points outside the ball are pulled radially onto the sphere
                        let len = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if len > 1.0 {
                            r.iter_mut().for_each(|x| *x /= len);
                        }
                        let d = dist(r).0;
                        if d < best.0 {
                            best = (d, r);
                        }
                    }
                }
            }
            center = best.1;
            half *= 0.5;
        }
        dist(center).1
    }

    #[test]
    fn nearest_density_matches_brute_force_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let e: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let m = CMatrix::from_pairs(2, 2, &[(e[0], 0.0), (e[1], e[2]), (e[1], -e[2]), (e[3], 0.0)]);
            let closed = nearest_density_matrix(&HermitianMatrix::new(m.clone()).unwrap());
            let brute = brute_force_nearest(&m);
            let gap = (closed.matrix() - &brute).frobenius_norm();
            assert!(gap < 1e-4, "gap {gap}: {:?} vs {:?}", closed.matrix(), brute);
        }
    }
}
