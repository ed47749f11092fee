//! Quadratic (Gaussian) steady states and the single-particle quench.
//!
//! Three independent routes to the steady correlator are provided: the
//! continuous Lyapunov equation, the frequency integral of one resolvent
//! column, and RK4 time evolution of the correlator.

use log::{debug, info};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BlockTridiagonal, ComplexMatrix, ComplexSchur, SparseMatrix, I, ZERO};
use crate::model::{self, Boundary, ModelParams, STABILITY_EPS};
use crate::quadrature::{self, QuadratureOptions};
use crate::spectral;

/// Marginal eigenvalue pairs: `|lambda_m + conj(lambda_n)|` below this.
pub const MARGINAL_PAIR_TOL: f64 = 1e-10;
/// Projected source below which a marginal pair is dropped.
pub const MARGINAL_SOURCE_TOL: f64 = 1e-12;
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossProfile {
    /// One value per cell, cell 1 first.
    pub values: Vec<f64>,
    pub total: f64,
}

impl LossProfile {
    pub fn new(values: Vec<f64>) -> Self {
        let total = values.iter().sum();
        Self { values, total }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSnapshot {
    pub time: f64,
    pub profile: LossProfile,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchResult {
    /// `P_x` at the final time.
    pub profile: LossProfile,
    pub snapshots: Vec<QuenchSnapshot>,
    /// `<psi|psi>` at the final time.
    pub residual_norm: f64,
    /// Largest per-step `|d<psi|psi>/dt + 2 gamma1 sum_x |psi_xB|^2|` by finite difference.
    pub max_balance_defect: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorState {
    pub delta: ComplexMatrix,
    pub time: f64,
    /// `|X D + D X^H + 2M|_F / |2M|_F`.
    pub residual: f64,
}

impl CorrelatorState {
    pub fn zeros(n: usize) -> Self {
        Self { delta: ComplexMatrix::zeros(n, n), time: 0.0, residual: f64::NAN }
    }

    pub fn b_densities(&self) -> Vec<f64> {
        model::b_diagonal(&self.delta)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.delta)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_hermitian_eigenvalue(&self.delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: CorrelatorState,
    /// Marginal pairs dropped under the dark-mode rule.
    pub dropped_pairs: usize,
    pub max_re: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub n_b: LossProfile,
    /// Per-cell quadrature error estimates.
    pub errors: Vec<f64>,
    pub evaluations: usize,
}

fn relative_residual(x: &ComplexMatrix, delta: &ComplexMatrix, mg: &ComplexMatrix) -> f64 {
    let denom = 2.0 * linalg::frobenius(mg);
    let r = linalg::frobenius(&linalg::lyapunov_residual(x, delta, mg));
    if denom > 0.0 {
        r / denom
    } else {
        r
    }
}

fn check_square(x: &ComplexMatrix, mg: &ComplexMatrix) -> Result<()> {
    if !x.is_square() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: x.ncols() });
    }
    if mg.nrows() != x.nrows() || mg.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: mg.nrows() });
    }
    Ok(())
}

/// Schur factorisation of a damping matrix, reusable across gain matrices.
#[derive(Debug, Clone)]
pub struct LyapunovSolver {
    x: ComplexMatrix,
    schur: ComplexSchur,
    max_re: f64,
}

impl LyapunovSolver {
    pub fn new(x: &ComplexMatrix) -> Result<Self> {
        let schur = ComplexSchur::new(x)?;
        let max_re = schur.eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if max_re > STABILITY_EPS {
            return Err(Error::UnstableDamping { max_re });
        }
        Ok(Self { x: x.clone(), schur, max_re })
    }

    pub fn max_re(&self) -> f64 {
        self.max_re
    }

    /// Solve `X D + D X^H + 2 Mg = 0`.
    pub fn solve(&self, mg: &ComplexMatrix) -> Result<SteadyState> {
        check_square(&self.x, mg)?;
        let q = &self.schur.q;
        let c = q.adjoint() * mg * q * Complex64::new(-2.0, 0.0);
        let source_scale = linalg::frobenius(&c).max(1.0);
        let (y, dropped) = linalg::solve_triangular_lyapunov(
            &self.schur.t,
            &c,
            MARGINAL_PAIR_TOL,
            MARGINAL_SOURCE_TOL * source_scale,
        )?;
        if dropped > 0 {
            info!("dropped {dropped} marginal eigenvalue pairs carrying no source");
        }
        let delta = linalg::hermitian_part(&(q * y * q.adjoint()));
        finish(&self.x, mg, delta, dropped, self.max_re)
    }
}

fn finish(
    x: &ComplexMatrix,
    mg: &ComplexMatrix,
    delta: ComplexMatrix,
    dropped: usize,
    max_re: f64,
) -> Result<SteadyState> {
    let residual = relative_residual(x, &delta, mg);
    if !(residual <= LYAPUNOV_RESIDUAL_TOL) {
        return Err(Error::IllConditioned(format!("Lyapunov residual {residual:e} exceeds {LYAPUNOV_RESIDUAL_TOL:e}")));
    }
    Ok(SteadyState { state: CorrelatorState { delta, time: f64::INFINITY, residual }, dropped_pairs: dropped, max_re })
}

/// Steady correlator from the Lyapunov equation (Schur / Bartels-Stewart).
pub fn solve_lyapunov(x: &ComplexMatrix, mg: &ComplexMatrix) -> Result<SteadyState> {
    check_square(x, mg)?;
    LyapunovSolver::new(x)?.solve(mg)
}

/// Same equation through the eigenbasis of `X`: with `X = R diag(l) R^{-1}`,
/// `D = R [S_mn / (l_m + conj l_n)] R^H`, `S = -2 R^{-1} Mg R^{-H}`.
///
/// Accurate only while `R` is well conditioned; under strong skin
/// localisation it is not, and the residual check reports `IllConditioned`.
pub fn solve_lyapunov_eigen(x: &ComplexMatrix, mg: &ComplexMatrix) -> Result<SteadyState> {
    check_square(x, mg)?;
    let schur = ComplexSchur::new(x)?;
    let lambda = schur.eigenvalues();
    let max_re = lambda.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re > STABILITY_EPS {
        return Err(Error::UnstableDamping { max_re });
    }
    let r = schur.eigenvectors();
    let lu = r.clone().lu();
    let r_inv = lu.try_inverse().ok_or_else(|| Error::IllConditioned("eigenvector matrix is singular".into()))?;
    let s = &r_inv * mg * r_inv.adjoint() * Complex64::new(-2.0, 0.0);
    let scale = linalg::frobenius(&s).max(1.0);
    let n = x.nrows();
    let mut dropped = 0;
    let mut y = ComplexMatrix::zeros(n, n);
    for m in 0..n {
        for k in 0..n {
            let d = lambda[m] + lambda[k].conj();
            if d.norm() < MARGINAL_PAIR_TOL {
                if s[(m, k)].norm() > MARGINAL_SOURCE_TOL * scale {
                    return Err(Error::IllConditioned(format!(
                        "marginal pair ({m}, {k}) carries source {:e}",
                        s[(m, k)].norm()
                    )));
                }
                dropped += 1;
                continue;
            }
            y[(m, k)] = s[(m, k)] / d;
        }
    }
    let delta = linalg::hermitian_part(&(&r * y * r.adjoint()));
    finish(x, mg, delta, dropped, max_re)
}

/// Frequency cutoff `8 (|t1| + |t2| + gamma1 + |dgamma|)` beyond which the
/// resolvent integrands are handled by the mapped tails.
pub fn frequency_window(p: &ModelParams) -> f64 {
    8.0 * (p.t1.abs() + p.t2.abs() + p.gamma1 + p.delta_gamma().abs())
}

fn gapless_breakpoints(p: &ModelParams) -> Vec<f64> {
    spectral::gapless_point(p).map(|g| vec![-g.omega0, g.omega0]).unwrap_or_default()
}

fn require_obc(p: &ModelParams) -> Result<()> {
    if p.bc != Boundary::OBC {
        return Err(Error::InvalidParameter("resolvent integrals are implemented for open chains only".into()));
    }
    Ok(())
}

/// `int dw/pi |<xB|(z(w) - A)^{-1}|x0 A>|^2` for every cell.
fn resolvent_column_integral(
    p: &ModelParams,
    a: &ComplexMatrix,
    z_of: impl Fn(f64) -> Complex64 + Sync,
    opts: &QuadratureOptions,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let bt = BlockTridiagonal::from_dense(a)?;
    let source = p.pump_site();
    let cells = p.cells;
    let failure = std::cell::Cell::new(None);
    let f = |w: f64, out: &mut [f64]| match bt.solve_shifted_unit(z_of(w), source) {
        Ok(g) => {
            for x in 0..cells {
                out[x] = g[2 * x + 1].norm_sqr();
            }
        }
        Err(e) => {
            failure.set(Some(e));
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    };
    let r = quadrature::integrate_real_line(&f, cells, frequency_window(p), &gapless_breakpoints(p), opts)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let pi = std::f64::consts::PI;
    debug!("resolvent quadrature: {} intervals, {} evaluations", r.intervals, r.evaluations);
    Ok((r.values.iter().map(|v| v / pi).collect(), r.errors.iter().map(|v| v / pi).collect(), r.evaluations))
}

/// `P_x = gamma1 int dw/pi |<xB|(w - H)^{-1}|x0 A>|^2`.
pub fn loss_probability_integral(p: &ModelParams, opts: &QuadratureOptions) -> Result<DensityProfile> {
    p.validate()?;
    require_obc(p)?;
    let h = p.real_space_hamiltonian();
    let (v, e, evaluations) = resolvent_column_integral(p, &h, |w| Complex64::new(w, 0.0), opts)?;
    Ok(DensityProfile {
        n_b: LossProfile::new(v.iter().map(|x| x * p.gamma1).collect()),
        errors: e.iter().map(|x| x * p.gamma1).collect(),
        evaluations,
    })
}

/// `n_B(x) = gamma_g int dw/pi |<xB|(i w - X)^{-1}|x0 A>|^2`, including the
/// pump imbalance in `X`.
pub fn steady_density_integral(p: &ModelParams, opts: &QuadratureOptions) -> Result<DensityProfile> {
    p.validate()?;
    require_obc(p)?;
    let dg = p.delta_gamma();
    if dg > 0.0 {
        if let Ok(critical) = spectral::critical_imbalance(p) {
            if dg >= critical {
                return Err(Error::UnstableDamping { max_re: f64::NAN });
            }
        }
    }
    let x = p.damping_matrix();
    let (v, e, evaluations) = resolvent_column_integral(p, &x, |w| I * w, opts)?;
    Ok(DensityProfile {
        n_b: LossProfile::new(v.iter().map(|x| x * p.gamma_g).collect()),
        errors: e.iter().map(|x| x * p.gamma_g).collect(),
        evaluations,
    })
}

/// Evolve `i d|psi>/dt = H |psi>` from `|x0 A>` with RK4 and accumulate
/// `P(x, t) = 2 gamma1 int_0^t |psi_xB|^2` as extra ODE components.
///
/// `snapshot_every` (in time units) controls the recorded history.
pub fn quench_loss(
    p: &ModelParams,
    t_max: f64,
    dt: f64,
    snapshot_every: Option<f64>,
    norm_tol: f64,
) -> Result<QuenchResult> {
    p.validate()?;
    require_obc(p)?;
    if !(dt > 0.0) || !(t_max > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and t_max > 0, got {dt}, {t_max}")));
    }
    // -i H, applied as a sparse operator.
    let gen = SparseMatrix::from_dense(&p.real_space_hamiltonian().map(|z| -I * z));
    let n = p.dim();
    let cells = p.cells;
    let g2 = 2.0 * p.gamma1;

    let mut psi = vec![ZERO; n];
    psi[p.pump_site()] = Complex64::new(1.0, 0.0);
    let mut loss = vec![0.0; cells];

    let rate = |psi: &[Complex64], out: &mut [f64]| {
        for x in 0..cells {
            out[x] = g2 * psi[2 * x + 1].norm_sqr();
        }
    };
    let norm = |psi: &[Complex64]| psi.iter().map(|z| z.norm_sqr()).sum::<f64>();

    let steps = (t_max / dt).ceil() as usize;
    let h = t_max / steps as f64;
    let snap_stride = snapshot_every.map(|s| ((s / h).round() as usize).max(1));
    let mut snapshots = vec![QuenchSnapshot { time: 0.0, profile: LossProfile::new(loss.clone()), norm: 1.0 }];

    let mut k = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
    let mut r = [vec![0.0; cells], vec![0.0; cells], vec![0.0; cells], vec![0.0; cells]];
    let mut stage = vec![ZERO; n];
    let mut max_defect = 0.0_f64;
    let mut current_norm = 1.0;
    for step in 1..=steps {
        gen.mul_vec_into(&psi, &mut k[0]);
        rate(&psi, &mut r[0]);
        for s in 1..4 {
            let c = if s == 3 { h } else { 0.5 * h };
            for i in 0..n {
                stage[i] = psi[i] + k[s - 1][i] * c;
            }
            gen.mul_vec_into(&stage, &mut k[s]);
            rate(&stage, &mut r[s]);
        }
        for i in 0..n {
            psi[i] += (k[0][i] + (k[1][i] + k[2][i]) * 2.0 + k[3][i]) * (h / 6.0);
        }
        let mut gained = 0.0;
        for x in 0..cells {
            let d = (r[0][x] + 2.0 * (r[1][x] + r[2][x]) + r[3][x]) * (h / 6.0);
            loss[x] += d;
            gained += d;
        }
        let new_norm = norm(&psi);
        max_defect = max_defect.max(((new_norm - current_norm) + gained).abs() / h);
        current_norm = new_norm;
        if let Some(stride) = snap_stride {
            if step % stride == 0 || step == steps {
                snapshots.push(QuenchSnapshot {
                    time: step as f64 * h,
                    profile: LossProfile::new(loss.clone()),
                    norm: current_norm,
                });
            }
        }
    }
    if current_norm > norm_tol {
        return Err(Error::NotConverged(format!("quench norm {current_norm:e} at t = {t_max} exceeds {norm_tol:e}")));
    }
    Ok(QuenchResult {
        profile: LossProfile::new(loss),
        snapshots,
        residual_norm: current_norm,
        max_balance_defect: max_defect,
        steps,
    })
}

/// RK4 step `dt = 0.5 / rho(X)`.
pub fn default_dt(x: &ComplexMatrix) -> Result<f64> {
    Ok(0.5 / linalg::spectral_radius(x)?.max(f64::MIN_POSITIVE))
}

/// Right-hand side `X D + D X^H + 2M`, exactly Hermitian for Hermitian `D`.
pub(crate) fn lyapunov_rhs(x: &SparseMatrix, delta: &ComplexMatrix, two_m: &ComplexMatrix) -> ComplexMatrix {
    let w = x.mul_dense(delta);
    let n = w.nrows();
    let mut out = two_m.clone();
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] += w[(i, j)] + w[(j, i)].conj();
        }
    }
    out
}

pub(crate) fn rk4_step<F: Fn(&ComplexMatrix) -> ComplexMatrix>(f: &F, d: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let k1 = f(d);
    let k2 = f(&(d + &k1 * Complex64::new(0.5 * h, 0.0)));
    let k3 = f(&(d + &k2 * Complex64::new(0.5 * h, 0.0)));
    let k4 = f(&(d + &k3 * Complex64::new(h, 0.0)));
    d + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0)
}

/// RK4 on `dD/dt = X D + D X^H + 2 Mg` from `delta0`.
///
/// Records a state every `record_every` time units (always the last one).
/// Requires `dt rho(X) < 1`.
pub fn evolve_correlator(
    x: &ComplexMatrix,
    mg: &ComplexMatrix,
    delta0: &CorrelatorState,
    t_max: f64,
    dt: f64,
    record_every: Option<f64>,
) -> Result<Vec<CorrelatorState>> {
    check_square(x, mg)?;
    let product = dt * linalg::spectral_radius(x)?;
    if !(product < 1.0) {
        return Err(Error::StepTooLarge { product });
    }
    let xs = SparseMatrix::from_dense(x);
    let two_m = mg * Complex64::new(2.0, 0.0);
    let f = |d: &ComplexMatrix| lyapunov_rhs(&xs, d, &two_m);
    let steps = ((t_max - delta0.time) / dt).ceil().max(0.0) as usize;
    let h = if steps > 0 { (t_max - delta0.time) / steps as f64 } else { dt };
    let stride = record_every.map(|s| ((s / h).round() as usize).max(1));
    let mut d = delta0.delta.clone();
    let mut out = Vec::new();
    let state = |d: &ComplexMatrix, t: f64| CorrelatorState {
        delta: d.clone(),
        time: t,
        residual: relative_residual(x, d, mg),
    };
    out.push(state(&d, delta0.time));
    for step in 1..=steps {
        d = rk4_step(&f, &d, h);
        let t = delta0.time + step as f64 * h;
        if stride.is_some_and(|s| step % s == 0) || step == steps {
            out.push(state(&d, t));
        }
    }
    Ok(out)
}
