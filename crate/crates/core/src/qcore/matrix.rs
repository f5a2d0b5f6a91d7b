//! Dense row-major complex matrices sized for 1–3 qubit systems.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;

use crate::scalar::Real;

/// Complex scalar over a [`Real`] component type.
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn cr<T: Real>(re: f64, im: f64) -> C<T> {
    Complex::new(T::lit(re), T::lit(im))
}

/// Dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Convenience constructor from `(re, im)` literal pairs, row-major.
    pub fn from_pairs(rows: usize, cols: usize, pairs: &[(f64, f64)]) -> Self {
        assert_eq!(pairs.len(), rows * cols, "matrix data length");
        Self::from_vec(rows, cols, pairs.iter().map(|&(re, im)| cr(re, im)).collect())
    }

    pub fn from_real_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C::new(d, T::zero());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape");
        (0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .fold(C::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.adjoint())
    }

    /// Kronecker product `self ⊗ rhs`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let rows = self.rows * rhs.rows;
        let cols = self.cols * rhs.cols;
        Self::from_fn(rows, cols, |r, c| {
            self[(r / rhs.rows, c / rhs.cols)] * rhs[(r % rhs.rows, c % rhs.cols)]
        })
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(C::new(s, T::zero()))
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).fold(C::new(T::zero(), T::zero()), |acc, i| acc + self[(i, i)])
    }

    /// `(M + M†) / 2`, with an exactly real diagonal.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        let mut out = Self::from_fn(self.rows, self.cols, |r, c| {
            (self[(r, c)] + self[(c, r)].conj()).scale(half)
        });
        for i in 0..self.rows {
            out[(i, i)].im = T::zero();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn hermiticity_error(&self) -> T {
        if !self.is_square() {
            return T::infinity();
        }
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in r..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        self.is_square() && self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.rows)) <= tol
    }

    /// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Only the Hermitian part of `self` is used.
    pub fn eigh(&self) -> HermitianEigen<T> {
        assert!(self.is_square(), "eigh needs a square matrix");
        let n = self.rows;
        let mut a = self.hermitian_part();
        let mut v = Self::identity(n);
        let zero = C::new(T::zero(), T::zero());
        let scale = a.frobenius_norm();
        let stop = T::epsilon() * T::epsilon() * scale * scale;

        for _sweep in 0..64 {
            let mut off = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    off = off + a[(p, q)].norm_sqr();
                }
            }
            if off <= stop || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    let mag = apq.norm();
                    if mag == T::zero() {
                        continue;
                    }
                    let phase = apq.unscale(mag);
                    let app = a[(p, p)].re;
                    let aqq = a[(q, q)].re;
                    let tau = (aqq - app) / (mag + mag);
                    let t = if tau == T::zero() {
                        T::one()
                    } else {
                        tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    // Rotation G restricted to (p, q): [[c, s], [-s·e^{-iφ}, c·e^{-iφ}]].
                    let g_pp = C::new(c, T::zero());
                    let g_pq = C::new(s, T::zero());
                    let g_qp = -phase.conj().scale(s);
                    let g_qq = phase.conj().scale(c);

                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * g_pp + akq * g_qp;
                        a[(k, q)] = akp * g_pq + akq * g_qq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = g_pp.conj() * apk + g_qp.conj() * aqk;
                        a[(q, k)] = g_pq.conj() * apk + g_qq.conj() * aqk;
                    }
                    a[(p, q)] = zero;
                    a[(q, p)] = zero;
                    a[(p, p)].im = T::zero();
                    a[(q, q)].im = T::zero();

                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * g_pp + vkq * g_qp;
                        v[(k, q)] = vkp * g_pq + vkq * g_qq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).expect("finite eigenvalues"));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let vectors = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        HermitianEigen { values, vectors }
    }
}

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// `V · diag(f(λ)) · V†`.
    pub fn reassemble_with(&self, f: impl Fn(T) -> T) -> CMatrix<T> {
        let mapped: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        self.reassemble(&mapped)
    }

    /// `V diag(values) V†` with the stored eigenvectors.
    pub fn reassemble(&self, mapped: &[T]) -> CMatrix<T> {
        let n = self.values.len();
        assert_eq!(mapped.len(), n);
        let mut out = CMatrix::zeros(n, n);
        for (k, &lambda) in mapped.iter().enumerate() {
            if lambda == T::zero() {
                continue;
            }
            for r in 0..n {
                let vr = self.vectors[(r, k)].scale(lambda);
                for c in 0..n {
                    out[(r, c)] = out[(r, c)] + vr * self.vectors[(c, k)].conj();
                }
            }
        }
        out
    }

    pub fn min(&self) -> T {
        self.values[0]
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C<T> {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs)
    }
}
