//! Two-band lossy chain: parameters, Hamiltonians, gain and damping matrices.
//!
//! Sites are flattened cell-major with A before B: `flat = 2 (cell - 1) + s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, I};
use num_complex::Complex64;

/// Max real part inside `[-STABILITY_EPS, STABILITY_EPS]` counts as marginal.
pub const STABILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Boundary {
    #[default]
    OBC,
    PBC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Statistics {
    #[default]
    Bosonic,
    Fermionic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    pub cell: usize,
    pub sublattice: Sublattice,
}

impl SiteIndex {
    pub fn new(cell: usize, sublattice: Sublattice) -> Self {
        assert!(cell >= 1, "cells are numbered from 1");
        Self { cell, sublattice }
    }

    pub fn a(cell: usize) -> Self {
        Self::new(cell, Sublattice::A)
    }

    pub fn b(cell: usize) -> Self {
        Self::new(cell, Sublattice::B)
    }

    pub fn flat(self) -> usize {
        2 * (self.cell - 1)
            + match self.sublattice {
                Sublattice::A => 0,
                Sublattice::B => 1,
            }
    }

    pub fn from_flat(flat: usize) -> Self {
        Self { cell: flat / 2 + 1, sublattice: if flat.is_multiple_of(2) { Sublattice::A } else { Sublattice::B } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub t1: f64,
    pub t2: f64,
    pub gamma1: f64,
    #[serde(default)]
    pub gamma2: f64,
    pub gamma_g: f64,
    pub gamma_l: f64,
    #[serde(rename = "L")]
    pub cells: usize,
    pub x0: usize,
    #[serde(default)]
    pub bc: Boundary,
    #[serde(default)]
    pub statistics: Statistics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub class: StabilityClass,
    pub max_re: f64,
}

impl Stability {
    pub fn is_unstable(&self) -> bool {
        self.class == StabilityClass::Unstable
    }
}

impl ModelParams {
    /// Balanced bosonic chain under OBC with no two-body loss.
    pub fn quadratic(t1: f64, t2: f64, gamma1: f64, gamma_g: f64, cells: usize, x0: usize) -> Self {
        Self {
            t1,
            t2,
            gamma1,
            gamma2: 0.0,
            gamma_g,
            gamma_l: gamma_g,
            cells,
            x0,
            bc: Boundary::OBC,
            statistics: Statistics::Bosonic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("t1", self.t1),
            ("t2", self.t2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma_g", self.gamma_g),
            ("gamma_l", self.gamma_l),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.t2 == 0.0 {
            return Err(Error::InvalidParameter("t2 must be nonzero".into()));
        }
        for (name, v) in &reals[2..] {
            if *v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        let min_cells = match self.bc {
            Boundary::OBC => 1,
            Boundary::PBC => 2,
        };
        if self.cells < min_cells {
            return Err(Error::InvalidParameter(format!(
                "L must be >= {min_cells} under {:?}, got {}",
                self.bc, self.cells
            )));
        }
        if self.x0 < 1 || self.x0 > self.cells {
            return Err(Error::InvalidParameter(format!("x0 must lie in [1, {}], got {}", self.cells, self.x0)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.cells
    }

    pub fn pump_site(&self) -> usize {
        SiteIndex::a(self.x0).flat()
    }

    pub fn delta_gamma(&self) -> f64 {
        self.gamma_g - self.gamma_l
    }

    /// Imaginary gap of the Bloch damping spectrum closes iff `0 < t1 <= t2`.
    pub fn is_gapless(&self) -> bool {
        self.t1 > 0.0 && self.t1 <= self.t2
    }

    pub fn with_x0(&self, x0: usize) -> Self {
        Self { x0, ..*self }
    }

    /// `H(k) = (t1 + t2 cos k) sx + (t2 sin k + i g/2) sz - i g/2`.
    pub fn bloch_hamiltonian(&self, k: f64) -> ComplexMatrix {
        let c = Complex64::new(self.t1 + self.t2 * k.cos(), 0.0);
        let z = Complex64::new(self.t2 * k.sin(), 0.5 * self.gamma1);
        let shift = I * (0.5 * self.gamma1);
        ComplexMatrix::from_row_slice(2, 2, &[z - shift, c, c, -z - shift])
    }

    fn build_hamiltonian(&self, loss: bool) -> ComplexMatrix {
        let n = self.dim();
        let l = self.cells;
        let mut h = ComplexMatrix::zeros(n, n);
        let a = |x: usize| 2 * x;
        let b = |x: usize| 2 * x + 1;
        for x in 0..l {
            h[(a(x), b(x))] += Complex64::new(self.t1, 0.0);
            h[(b(x), a(x))] += Complex64::new(self.t1, 0.0);
            if loss {
                h[(b(x), b(x))] -= I * self.gamma1;
            }
        }
        let bonds = match self.bc {
            Boundary::OBC => l.saturating_sub(1),
            Boundary::PBC => l,
        };
        let half = 0.5 * self.t2;
        for x in 0..bonds {
            let y = (x + 1) % l;
            let terms = [
                (a(x), b(y), Complex64::new(half, 0.0)),
                (a(y), b(x), Complex64::new(half, 0.0)),
                (a(y), a(x), I * half),
                (b(y), b(x), -I * half),
            ];
            for (i, j, v) in terms {
                h[(i, j)] += v;
                h[(j, i)] += v.conj();
            }
        }
        h
    }

    /// Full non-Hermitian `H`, with `-i gamma1` on every B site.
    pub fn real_space_hamiltonian(&self) -> ComplexMatrix {
        self.build_hamiltonian(true)
    }

    /// Hermitian hopping part `H0`.
    pub fn hermitian_hamiltonian(&self) -> ComplexMatrix {
        self.build_hamiltonian(false)
    }

    /// `X = i H^* + (gamma_g - gamma_l) P_pump` (bosonic) or
    /// `X_F = i H^* - (gamma_g + gamma_l) P_pump` (fermionic).
    pub fn damping_matrix(&self) -> ComplexMatrix {
        let mut x = self.real_space_hamiltonian().map(|z| I * z.conj());
        let p = self.pump_site();
        let impurity = match self.statistics {
            Statistics::Bosonic => self.gamma_g - self.gamma_l,
            Statistics::Fermionic => -(self.gamma_g + self.gamma_l),
        };
        x[(p, p)] += Complex64::new(impurity, 0.0);
        x
    }

    /// Balanced damping matrix `i H^*`, independent of the pump rates.
    pub fn balanced_damping_matrix(&self) -> ComplexMatrix {
        self.real_space_hamiltonian().map(|z| I * z.conj())
    }

    pub fn gain_matrix(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n);
        let p = self.pump_site();
        m[(p, p)] = Complex64::new(self.gamma_g, 0.0);
        m
    }
}

pub fn classify(max_re: f64) -> Stability {
    let class = if max_re > STABILITY_EPS {
        StabilityClass::Unstable
    } else if max_re >= -STABILITY_EPS {
        StabilityClass::Marginal
    } else {
        StabilityClass::Stable
    };
    Stability { class, max_re }
}

pub fn stability_check(x: &ComplexMatrix) -> Result<Stability> {
    let max_re = linalg::eigenvalues(x)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(classify(max_re))
}

/// Real parts of the B-site diagonal of a correlator, one per cell.
pub fn b_diagonal(delta: &ComplexMatrix) -> Vec<f64> {
    (0..delta.nrows() / 2).map(|x| delta[(2 * x + 1, 2 * x + 1)].re).collect()
}
