use num_complex::Complex64;

use super::{ComplexMatrix, ZERO};
use crate::error::{Error, Result};

type Block = [[Complex64; 2]; 2];

fn mul(a: &Block, b: &Block) -> Block {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn mul_vec(a: &Block, v: &[Complex64; 2]) -> [Complex64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn inverse(a: &Block) -> Option<Block> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    if det.norm() <= f64::EPSILON * scale * scale || !det.is_finite() {
        return None;
    }
    let inv = 1.0 / det;
    Some([[a[1][1] * inv, -a[0][1] * inv], [-a[1][0] * inv, a[0][0] * inv]])
}

/// Open chain with 2x2 cell blocks: `diag[x]`, `upper[x]` couples cell `x`
/// to `x+1`, `lower[x]` couples `x+1` to `x`.
///
/// Solves `(z I - A) g = b` in O(L) by block elimination, which is what makes
/// frequency quadrature over long chains cheap.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    diag: Vec<Block>,
    upper: Vec<Block>,
    lower: Vec<Block>,
}

impl BlockTridiagonal {
    /// Fails if `a` has entries outside the nearest-cell band (e.g. a
    /// periodic wrap).
    pub fn from_dense(a: &ComplexMatrix) -> Result<Self> {
        let n = a.nrows();
        if !n.is_multiple_of(2) || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n + n % 2, got: a.ncols() });
        }
        let cells = n / 2;
        for i in 0..n {
            for j in 0..n {
                if (i / 2).abs_diff(j / 2) > 1 && a[(i, j)] != ZERO {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not block tridiagonal: entry ({i}, {j}) is nonzero"
                    )));
                }
            }
        }
        let block = |ci: usize, cj: usize| -> Block {
            [[a[(2 * ci, 2 * cj)], a[(2 * ci, 2 * cj + 1)]], [a[(2 * ci + 1, 2 * cj)], a[(2 * ci + 1, 2 * cj + 1)]]]
        };
        Ok(Self {
            diag: (0..cells).map(|c| block(c, c)).collect(),
            upper: (0..cells.saturating_sub(1)).map(|c| block(c, c + 1)).collect(),
            lower: (0..cells.saturating_sub(1)).map(|c| block(c + 1, c)).collect(),
        })
    }

    pub fn cells(&self) -> usize {
        self.diag.len()
    }

    /// Solve `(z I - A) g = e_k` for a unit source at flat index `k`.
    pub fn solve_shifted_unit(&self, z: Complex64, k: usize) -> Result<Vec<Complex64>> {
        let mut rhs = vec![ZERO; 2 * self.cells()];
        rhs[k] = Complex64::new(1.0, 0.0);
        self.solve_shifted(z, &rhs)
    }

    pub fn solve_shifted(&self, z: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let cells = self.cells();
        if rhs.len() != 2 * cells {
            return Err(Error::DimensionMismatch { expected: 2 * cells, got: rhs.len() });
        }
        let shifted = |b: &Block| -> Block { [[z - b[0][0], -b[0][1]], [-b[1][0], z - b[1][1]]] };
        let neg = |b: &Block| -> Block { [[-b[0][0], -b[0][1]], [-b[1][0], -b[1][1]]] };
        let singular = || Error::IllConditioned(format!("block elimination pivot singular at z = {z}"));

        let mut c_prime: Vec<Block> = Vec::with_capacity(cells);
        let mut d_prime: Vec<[Complex64; 2]> = Vec::with_capacity(cells);
        for x in 0..cells {
            let mut pivot = shifted(&self.diag[x]);
            let mut r = [rhs[2 * x], rhs[2 * x + 1]];
            if x > 0 {
                let lo = neg(&self.lower[x - 1]);
                let lc = mul(&lo, &c_prime[x - 1]);
                for a in 0..2 {
                    for b in 0..2 {
                        pivot[a][b] -= lc[a][b];
                    }
                }
                let ld = mul_vec(&lo, &d_prime[x - 1]);
                r[0] -= ld[0];
                r[1] -= ld[1];
            }
            let inv = inverse(&pivot).ok_or_else(singular)?;
            if x + 1 < cells {
                c_prime.push(mul(&inv, &neg(&self.upper[x])));
            }
            d_prime.push(mul_vec(&inv, &r));
        }
        let mut g = vec![ZERO; 2 * cells];
        let mut next = d_prime[cells - 1];
        g[2 * cells - 2] = next[0];
        g[2 * cells - 1] = next[1];
        for x in (0..cells - 1).rev() {
            let cg = mul_vec(&c_prime[x], &next);
            next = [d_prime[x][0] - cg[0], d_prime[x][1] - cg[1]];
            g[2 * x] = next[0];
            g[2 * x + 1] = next[1];
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_solve() {
        let n = 12;
        let a = ComplexMatrix::from_fn(n, n, |i, j| {
            if (i / 2).abs_diff(j / 2) <= 1 {
                Complex64::new(((i * 3 + j) % 5) as f64 * 0.3 - 0.5, ((i + 2 * j) % 3) as f64 * 0.2)
            } else {
                ZERO
            }
        });
        let bt = BlockTridiagonal::from_dense(&a).unwrap();
        let z = Complex64::new(0.3, 2.1);
        let g = bt.solve_shifted_unit(z, 5).unwrap();
        let m = ComplexMatrix::identity(n, n) * z - &a;
        let mut e = nalgebra::DVector::from_element(n, ZERO);
        e[5] = Complex64::new(1.0, 0.0);
        let dense = m.lu().solve(&e).unwrap();
        for i in 0..n {
            assert!((g[i] - dense[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_periodic_wrap() {
        let mut a = ComplexMatrix::zeros(8, 8);
        a[(0, 7)] = Complex64::new(1.0, 0.0);
        assert!(BlockTridiagonal::from_dense(&a).is_err());
    }
}
