//! Dense complex linear algebra used across the crate.
//!
//! Everything is built on `nalgebra::DMatrix<Complex64>`. The pieces that
//! nalgebra does not provide for general complex matrices (eigenvectors,
//! Bartels-Stewart for the continuous Lyapunov equation) live here.

mod block;
mod sparse;

pub use block::BlockTridiagonal;
pub use sparse::SparseMatrix;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix. Storage is nalgebra's column-major layout.
pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

const SCHUR_MAX_ITER: usize = 1_000_000;

/// Complex Schur form `A = Q T Q^H` with `T` upper triangular and `Q` unitary.
#[derive(Debug, Clone)]
pub struct ComplexSchur {
    pub q: ComplexMatrix,
    pub t: ComplexMatrix,
}

impl ComplexSchur {
    pub fn new(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
        }
        if a.nrows() == 0 {
            return Ok(Self { q: a.clone(), t: a.clone() });
        }
        let schur =
            nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::SchurFailed)?;
        let (q, mut t) = schur.unpack();
        // nalgebra leaves rounding noise below the diagonal.
        let n = t.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                t[(i, j)] = ZERO;
            }
        }
        Ok(Self { q, t })
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.t.diagonal().iter().copied().collect()
    }

    /// Right eigenvectors of `A` as columns (unit 2-norm), by back substitution
    /// on the triangular factor.
    pub fn eigenvectors(&self) -> ComplexMatrix {
        let n = self.t.nrows();
        let t = &self.t;
        let norm_t = t.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
        let small = norm_t * f64::EPSILON;
        let mut v = ComplexMatrix::zeros(n, n);
        for k in 0..n {
            let lambda = t[(k, k)];
            v[(k, k)] = ONE;
            for i in (0..k).rev() {
                let mut acc = ZERO;
                for j in (i + 1)..=k {
                    acc += t[(i, j)] * v[(j, k)];
                }
                let mut denom = t[(i, i)] - lambda;
                if denom.norm() < small {
                    denom = Complex64::new(small, 0.0);
                }
                v[(i, k)] = -acc / denom;
            }
        }
        let mut r = &self.q * v;
        for mut col in r.column_iter_mut() {
            let nrm = col.norm();
            if nrm > 0.0 {
                col /= Complex64::new(nrm, 0.0);
            }
        }
        r
    }
}

pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>> {
    Ok(ComplexSchur::new(a)?.eigenvalues())
}

pub fn spectral_radius(a: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Max absolute entry of `A - A^H`.
pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^H) / 2`
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn frobenius(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of a Hermitian matrix (the Hermitian part is used).
pub fn min_hermitian_eigenvalue(a: &ComplexMatrix) -> f64 {
    let h = hermitian_part(a);
    if h.nrows() == 0 {
        return 0.0;
    }
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Residual `X D + D X^H + 2 M` of the continuous Lyapunov equation.
pub fn lyapunov_residual(x: &ComplexMatrix, delta: &ComplexMatrix, mg: &ComplexMatrix) -> ComplexMatrix {
    let xd = x * delta;
    &xd + delta * x.adjoint() + mg * Complex64::new(2.0, 0.0)
}

/// Solve `T Y + Y T^H = C` for upper-triangular `T`.
///
/// Pairs with `|T_ii + conj(T_jj)| < pair_tol` are marginal: the unknown is
/// set to zero when its right-hand side is below `source_tol`, otherwise the
/// system has no bounded solution.
pub(crate) fn solve_triangular_lyapunov(
    t: &ComplexMatrix,
    c: &ComplexMatrix,
    pair_tol: f64,
    source_tol: f64,
) -> Result<(ComplexMatrix, usize)> {
    let n = t.nrows();
    let mut y = ComplexMatrix::zeros(n, n);
    let mut dropped = 0usize;
    let mut rhs = vec![ZERO; n];
    for j in (0..n).rev() {
        // rhs = c_j - sum_{k>j} conj(T_jk) y_k
        for i in 0..n {
            rhs[i] = c[(i, j)];
        }
        for k in (j + 1)..n {
            let coef = t[(j, k)].conj();
            if coef == ZERO {
                continue;
            }
            for i in 0..n {
                rhs[i] -= coef * y[(i, k)];
            }
        }
        // (T + conj(T_jj) I) y_j = rhs, upper triangular back substitution
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut acc = rhs[i];
            for k in (i + 1)..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() < pair_tol {
                if acc.norm() <= source_tol {
                    y[(i, j)] = ZERO;
                    dropped += 1;
                    continue;
                }
                return Err(Error::IllConditioned(format!(
                    "marginal pair ({i}, {j}) with |lambda_m + conj(lambda_n)| = {:e} carries source {:e}",
                    d.norm(),
                    acc.norm()
                )));
            }
            y[(i, j)] = acc / d;
        }
    }
    Ok((y, dropped))
}
