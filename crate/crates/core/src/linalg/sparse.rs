use num_complex::Complex64;

use super::{ComplexMatrix, ZERO};

/// Compressed-row complex matrix for the banded lattice operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseMatrix {
    /// Drops exact zeros of a square dense matrix.
    pub fn from_dense(a: &ComplexMatrix) -> Self {
        let n = a.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != ZERO {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn conjugate(&self) -> Self {
        Self { values: self.values.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// `out = A x`
    #[inline]
    pub fn mul_vec_into(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            *o = acc;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `A * B` for dense `B`, column by column.
    pub fn mul_dense(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.n, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            let src = col.as_slice();
            let mut dst = out.column_mut(j);
            self.mul_vec_into(src, dst.as_mut_slice());
        }
        out
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut a = ComplexMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_products() {
        let a = ComplexMatrix::from_fn(6, 6, |i, j| {
            if (i as i64 - j as i64).abs() <= 1 {
                Complex64::new(i as f64 + 1.0, j as f64 - 2.0)
            } else {
                ZERO
            }
        });
        let s = SparseMatrix::from_dense(&a);
        assert_eq!(s.nnz(), 16);
        assert_eq!(s.to_dense(), a);
        let b = ComplexMatrix::from_fn(6, 3, |i, j| Complex64::new((i * j) as f64, 1.0));
        let diff = s.mul_dense(&b) - &a * &b;
        assert!(diff.iter().all(|z| z.norm() < 1e-12));
        assert_eq!(s.conjugate().to_dense(), a.conjugate());
    }
}
