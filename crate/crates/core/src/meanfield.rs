//! Mean-field closure of the two-body loss: the B-site loss rate becomes
//! `2 gamma2 n_B(x, t)`, giving a nonlinear correlator equation.

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, SparseMatrix};
use crate::model::{self, ModelParams};
use crate::spectral;
use crate::steady::{lyapunov_rhs, rk4_step};

/// Densities in `[-NEGATIVE_DENSITY_TOL, 0)` clamp to zero; below raise.
pub const NEGATIVE_DENSITY_TOL: f64 = 1e-10;
pub const BLOWUP_NORM: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub delta: ComplexMatrix,
    pub time: f64,
    /// `|X_MF D + D X_MF^H + 2M|_F / |2M|_F`.
    pub residual: f64,
}

impl MeanFieldState {
    pub fn b_densities(&self) -> Vec<f64> {
        model::b_diagonal(&self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanFieldOptions {
    pub t_max: f64,
    /// Initial step; defaults to the pump-limited estimate.
    pub dt: Option<f64>,
    /// Converged when the relative residual drops below this.
    pub tol: f64,
    /// Step-doubling error bound per step.
    pub step_tol: f64,
    pub record_every: Option<f64>,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self { t_max: 5000.0, dt: None, tol: 1e-8, step_tol: 1e-6, record_every: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldRun {
    pub history: Vec<MeanFieldState>,
    pub steps: usize,
    pub rejected_steps: usize,
    /// Residual was non-increasing once it fell below `10 tol`.
    pub monotone_tail: bool,
}

impl MeanFieldRun {
    pub fn last(&self) -> &MeanFieldState {
        self.history.last().expect("history is never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldExponents {
    pub bulk: f64,
    pub edge: f64,
    pub bulk_sq: f64,
    pub edge_sq: f64,
}

fn densities(delta: &ComplexMatrix) -> Result<Vec<f64>> {
    let mut n = model::b_diagonal(delta);
    for (x, v) in n.iter_mut().enumerate() {
        if *v < -NEGATIVE_DENSITY_TOL {
            return Err(Error::NegativeDensity { cell: x + 1, value: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(n)
}

/// Balanced damping matrix with every B diagonal set to `-2 gamma2 D_{xB,xB}`.
pub fn meanfield_damping(p: &ModelParams, delta: &ComplexMatrix) -> Result<ComplexMatrix> {
    let mut x = p.balanced_damping_matrix();
    if delta.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: delta.nrows() });
    }
    for (c, n) in densities(delta)?.into_iter().enumerate() {
        let b = 2 * c + 1;
        x[(b, b)] = Complex64::new(-2.0 * p.gamma2 * n, 0.0);
    }
    Ok(x)
}

/// Pump-limited initial step: `0.1 / rho(X)` with B loss at the uniform
/// density that saturates the sum rule.
pub fn initial_dt(p: &ModelParams) -> Result<f64> {
    let floor = 2.0 * p.gamma2 * (p.gamma_g / (2.0 * p.gamma2 * p.cells as f64)).sqrt();
    let mut x = p.balanced_damping_matrix();
    for c in 0..p.cells {
        x[(2 * c + 1, 2 * c + 1)] = Complex64::new(-floor, 0.0);
    }
    let rho = linalg::spectral_radius(&x)?;
    Ok(0.1 / rho.max(f64::MIN_POSITIVE))
}

struct Rhs {
    hopping: SparseMatrix,
    two_m: ComplexMatrix,
    g2: f64,
    failure: std::cell::Cell<Option<Error>>,
}

impl Rhs {
    fn eval(&self, delta: &ComplexMatrix) -> ComplexMatrix {
        let mut out = lyapunov_rhs(&self.hopping, delta, &self.two_m);
        // Diagonal loss contributes -2 g n_x (D_{b,j} + D_{j,b}).
        match densities(delta) {
            Ok(n) => {
                let dim = delta.nrows();
                for (c, nx) in n.iter().enumerate() {
                    let b = 2 * c + 1;
                    let rate = 2.0 * self.g2 * nx;
                    if rate == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        out[(b, j)] -= delta[(b, j)] * rate;
                        out[(j, b)] -= delta[(j, b)] * rate;
                    }
                }
            }
            Err(e) => {
                self.failure.set(Some(e));
            }
        }
        out
    }
}

/// Integrate the mean-field correlator equation from `D = 0` with RK4,
/// refreshing the loss at every stage, until the relative residual drops
/// below `opts.tol`.
pub fn evolve_meanfield(p: &ModelParams, opts: &MeanFieldOptions) -> Result<MeanFieldRun> {
    p.validate()?;
    if p.gamma_g != p.gamma_l {
        return Err(Error::InvalidParameter("mean-field evolution needs gamma_g = gamma_l".into()));
    }
    if !(p.gamma2 > 0.0) {
        return Err(Error::InvalidParameter("mean-field evolution needs gamma2 > 0".into()));
    }
    let mut hopping = p.balanced_damping_matrix();
    for c in 0..p.cells {
        hopping[(2 * c + 1, 2 * c + 1)] = Complex64::new(0.0, 0.0);
    }
    let rhs = Rhs {
        hopping: SparseMatrix::from_dense(&hopping),
        two_m: p.gain_matrix() * Complex64::new(2.0, 0.0),
        g2: p.gamma2,
        failure: std::cell::Cell::new(None),
    };
    let two_m_norm = linalg::frobenius(&rhs.two_m).max(f64::MIN_POSITIVE);
    let f = |d: &ComplexMatrix| rhs.eval(d);
    let check = || match rhs.failure.take() {
        Some(e) => Err(e),
        None => Ok(()),
    };

    let n = p.dim();
    let mut d = ComplexMatrix::zeros(n, n);
    let mut t = 0.0;
    let mut h = match opts.dt {
        Some(v) => v,
        None => initial_dt(p)?,
    };
    let h_max = 8.0 * h;
    let mut history = Vec::new();
    let mut next_record = opts.record_every.unwrap_or(f64::INFINITY);
    let mut steps = 0;
    let mut rejected = 0;
    let mut monotone = true;
    let mut last_res = f64::INFINITY;
    loop {
        let res = linalg::frobenius(&f(&d)) / two_m_norm;
        check()?;
        if res < 10.0 * opts.tol {
            if res > last_res * 1.01 {
                monotone = false;
            }
            last_res = res;
        }
        let state = |d: &ComplexMatrix| MeanFieldState { delta: d.clone(), time: t, residual: res };
        if res < opts.tol || t >= opts.t_max {
            history.push(state(&d));
            if res >= opts.tol {
                return Err(Error::NotConverged(format!(
                    "mean-field residual {res:e} at t = {t} above {:e}",
                    opts.tol
                )));
            }
            debug!("mean-field converged at t = {t} after {steps} steps");
            return Ok(MeanFieldRun { history, steps, rejected_steps: rejected, monotone_tail: monotone });
        }
        if t >= next_record {
            history.push(state(&d));
            next_record += opts.record_every.unwrap_or(f64::INFINITY);
        }
        let h_step = h.min(opts.t_max - t);
        let full = rk4_step(&f, &d, h_step);
        let half = rk4_step(&f, &d, 0.5 * h_step);
        let two = rk4_step(&f, &half, 0.5 * h_step);
        check()?;
        let scale = linalg::frobenius(&two).max(1.0);
        let err = linalg::frobenius(&(&two - &full)) / scale;
        if !err.is_finite() || err > opts.step_tol {
            h *= 0.5;
            rejected += 1;
            if h < 1e-12 {
                return Err(Error::NotConverged(format!("step size underflow at t = {t}")));
            }
            continue;
        }
        d = two;
        t += h_step;
        steps += 1;
        let norm = linalg::frobenius(&d);
        if !(norm <= BLOWUP_NORM) {
            return Err(Error::Blowup { norm, time: t });
        }
        if err < opts.step_tol / 64.0 {
            h = (2.0 * h).min(h_max);
        }
    }
}

/// Mean-field scaling predictions in the gapless regime.
///
/// Bulk `b` solves `n ~ n^{-q} d^{-q}` with the quadratic bulk exponent
/// `q = 3/2`, i.e. `b = q / (1 + q)`. The squared density obeys the sum rule,
/// so its edge exponent is one less than its bulk exponent.
pub fn meanfield_exponents(p: &ModelParams) -> Result<MeanFieldExponents> {
    spectral::expansion_coefficients(p)?;
    let q = 1.5;
    let bulk = q / (1.0 + q);
    let bulk_sq = 2.0 * bulk;
    let edge_sq = bulk_sq - 1.0;
    Ok(MeanFieldExponents { bulk, edge: 0.5 * edge_sq, bulk_sq, edge_sq })
}
