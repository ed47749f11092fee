//! Positive-P phase-space trajectories for the chain with two-body loss on B
//! sites.
//!
//! State vector layout: `v = (alpha_0..alpha_{N-1}, beta_0..beta_{N-1})` with
//! `N = 2L` in the flat site order. Wiener increment `k` drives component `k`
//! of `v`, except that the pump block mixes `alpha_p` and `beta_p`.

use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, SparseMatrix, ZERO};
use crate::model::{ModelParams, Statistics};

pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed = base_seed + trajectory index";
pub const MAX_DISCARD_FRACTION: f64 = 0.01;
/// Trajectories per work unit; fixed so the merge order never depends on threads.
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub base_seed: u64,
    pub divergence_threshold: f64,
    pub record_times: Vec<f64>,
    /// Run trajectories on the rayon pool.
    pub parallel: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            t_end: 200.0,
            n_traj: 10_000,
            base_seed: 1,
            divergence_threshold: 1e6,
            record_times: vec![100.0, 200.0],
            parallel: true,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_traj < 1 {
            return Err(Error::InvalidParameter("n_traj must be >= 1".into()));
        }
        if self.record_times.iter().any(|t| !(*t >= 0.0) || *t > self.t_end + 1e-12) {
            return Err(Error::InvalidParameter(format!("record times must lie in [0, t_end = {}]", self.t_end)));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidParameter("divergence_threshold must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceState {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub time: f64,
}

impl PhaseSpaceState {
    pub fn vacuum(n: usize) -> Self {
        Self { alpha: vec![ZERO; n], beta: vec![ZERO; n], time: 0.0 }
    }

    pub fn max_modulus(&self) -> f64 {
        self.alpha.iter().chain(&self.beta).fold(0.0_f64, |m, z| m.max(z.norm()))
    }
}

/// Principal root of `-2 g z^2`: equals `+-i sqrt(2g) z`, sign chosen so the
/// real part is nonnegative (positive imaginary part on the cut).
#[inline]
fn loss_noise(sqrt_2g: f64, z: Complex64) -> Complex64 {
    let w = Complex64::new(-z.im * sqrt_2g, z.re * sqrt_2g);
    if w.re > 0.0 || (w.re == 0.0 && w.im >= 0.0) {
        w
    } else {
        -w
    }
}

/// Drift, diffusion and noise of the phase-space equations for one model.
#[derive(Debug, Clone)]
pub struct PhaseSpaceModel {
    n: usize,
    x: SparseMatrix,
    x_conj: SparseMatrix,
    gamma2: f64,
    sqrt_2g2: f64,
    gamma_g: f64,
    pump: usize,
    pump_amp: f64,
}

impl PhaseSpaceModel {
    pub fn new(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        if p.statistics != Statistics::Bosonic {
            return Err(Error::InvalidParameter("phase-space simulation is bosonic only".into()));
        }
        let x = p.damping_matrix();
        Ok(Self {
            n: p.dim(),
            x_conj: SparseMatrix::from_dense(&x.conjugate()),
            x: SparseMatrix::from_dense(&x),
            gamma2: p.gamma2,
            sqrt_2g2: (2.0 * p.gamma2).sqrt(),
            gamma_g: p.gamma_g,
            pump: p.pump_site(),
            pump_amp: (0.5 * p.gamma_g).sqrt(),
        })
    }

    /// Number of sites `N = 2L`; vectors have length `2N`.
    pub fn sites(&self) -> usize {
        self.n
    }

    fn two_body(&self, site: usize) -> bool {
        site % 2 == 1 && self.gamma2 > 0.0
    }

    /// Indices of `v` that receive noise.
    fn noisy_components(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.gamma_g > 0.0 {
            idx.push(self.pump);
            idx.push(self.n + self.pump);
        }
        if self.gamma2 > 0.0 {
            for s in (1..self.n).step_by(2) {
                idx.push(s);
                idx.push(self.n + s);
            }
        }
        idx.sort_unstable();
        idx
    }

    /// `(X^* alpha - 2 G alpha^2 beta ; X beta - 2 G alpha beta^2)`.
    pub fn drift(&self, s: &PhaseSpaceState) -> Vec<Complex64> {
        let mut out = vec![ZERO; 2 * self.n];
        let (da, db) = out.split_at_mut(self.n);
        self.drift_into(&s.alpha, &s.beta, da, db);
        out
    }

    #[inline]
    fn drift_into(&self, a: &[Complex64], b: &[Complex64], da: &mut [Complex64], db: &mut [Complex64]) {
        self.x_conj.mul_vec_into(a, da);
        self.x.mul_vec_into(b, db);
        if self.gamma2 > 0.0 {
            let g = 2.0 * self.gamma2;
            for s in (1..self.n).step_by(2) {
                let ab = a[s] * b[s];
                da[s] -= ab * a[s] * g;
                db[s] -= ab * b[s] * g;
            }
        }
    }

    /// Dense diffusion matrix `D(v)` (size `2N`).
    pub fn diffusion_matrix(&self, s: &PhaseSpaceState) -> ComplexMatrix {
        let n = self.n;
        let mut d = ComplexMatrix::zeros(2 * n, 2 * n);
        for site in (1..n).step_by(2) {
            if self.two_body(site) {
                d[(site, site)] = s.alpha[site] * s.alpha[site] * (-2.0 * self.gamma2);
                d[(n + site, n + site)] = s.beta[site] * s.beta[site] * (-2.0 * self.gamma2);
            }
        }
        let p = self.pump;
        d[(p, n + p)] += Complex64::new(2.0 * self.gamma_g, 0.0);
        d[(n + p, p)] += Complex64::new(2.0 * self.gamma_g, 0.0);
        d
    }

    /// Dense noise matrix `B(v)` with `B B^T = D(v)`.
    pub fn noise_matrix(&self, s: &PhaseSpaceState) -> ComplexMatrix {
        let n = self.n;
        let mut b = ComplexMatrix::zeros(2 * n, 2 * n);
        for site in (1..n).step_by(2) {
            if self.two_body(site) {
                b[(site, site)] = loss_noise(self.sqrt_2g2, s.alpha[site]);
                b[(n + site, n + site)] = loss_noise(self.sqrt_2g2, s.beta[site]);
            }
        }
        let p = self.pump;
        let (u, v) = (Complex64::new(self.pump_amp, self.pump_amp), Complex64::new(self.pump_amp, -self.pump_amp));
        b[(p, p)] += u;
        b[(p, n + p)] += v;
        b[(n + p, p)] += v;
        b[(n + p, n + p)] += u;
        b
    }

    /// Euler-Maruyama step `v += A(v) dt + B(v) dW`. Returns `false` if the
    /// new state exceeds `threshold` in modulus or is not finite.
    pub fn step(&self, s: &mut PhaseSpaceState, dw: &[f64], dt: f64, threshold: f64) -> bool {
        let mut scratch = Scratch::new(self.n);
        self.step_with(s, dw, dt, threshold, &mut scratch)
    }

    fn step_with(&self, s: &mut PhaseSpaceState, dw: &[f64], dt: f64, threshold: f64, w: &mut Scratch) -> bool {
        let n = self.n;
        debug_assert_eq!(dw.len(), 2 * n);
        self.drift_into(&s.alpha, &s.beta, &mut w.da, &mut w.db);
        // Noise uses the pre-step state.
        let p = self.pump;
        let pump = if self.gamma_g > 0.0 {
            let (u, v) = (Complex64::new(self.pump_amp, self.pump_amp), Complex64::new(self.pump_amp, -self.pump_amp));
            Some((u * dw[p] + v * dw[n + p], v * dw[p] + u * dw[n + p]))
        } else {
            None
        };
        if self.gamma2 > 0.0 {
            for site in (1..n).step_by(2) {
                w.da[site] = w.da[site] * dt + loss_noise(self.sqrt_2g2, s.alpha[site]) * dw[site];
                w.db[site] = w.db[site] * dt + loss_noise(self.sqrt_2g2, s.beta[site]) * dw[n + site];
            }
            for site in (0..n).step_by(2) {
                w.da[site] *= dt;
                w.db[site] *= dt;
            }
        } else {
            for site in 0..n {
                w.da[site] *= dt;
                w.db[site] *= dt;
            }
        }
        if let Some((pa, pb)) = pump {
            w.da[p] += pa;
            w.db[p] += pb;
        }
        let mut max = 0.0_f64;
        for site in 0..n {
            s.alpha[site] += w.da[site];
            s.beta[site] += w.db[site];
            max = max.max(s.alpha[site].norm_sqr()).max(s.beta[site].norm_sqr());
        }
        s.time += dt;
        max.is_finite() && max <= threshold * threshold
    }
}

#[derive(Debug, Clone)]
struct Scratch {
    da: Vec<Complex64>,
    db: Vec<Complex64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { da: vec![ZERO; n], db: vec![ZERO; n] }
    }
}

/// Running sums of one complex estimator; `sumsq` holds `(sum re^2, sum im^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moment {
    pub sum: Complex64,
    pub sumsq: Complex64,
}

impl Moment {
    #[inline]
    fn add(&mut self, z: Complex64) {
        self.sum += z;
        self.sumsq += Complex64::new(z.re * z.re, z.im * z.im);
    }

    fn merge(&mut self, o: &Moment) {
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    pub fn estimate(&self, count: usize) -> Estimate {
        let c = count as f64;
        if count == 0 {
            return Estimate::default();
        }
        let mean = self.sum / c;
        let se = |sq: f64, m: f64| {
            if count < 2 {
                f64::INFINITY
            } else {
                ((sq / c - m * m).max(0.0) * c / (c - 1.0) / c).sqrt()
            }
        };
        Estimate {
            mean: mean.re,
            stderr: se(self.sumsq.re, mean.re),
            imag: mean.im,
            imag_stderr: se(self.sumsq.im, mean.im),
        }
    }
}

/// Real part of an ensemble mean, its standard error, and the imaginary
/// part as a diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub imag: f64,
    pub imag_stderr: f64,
}

/// Moments at one record time. Per-site moments cover all `N` sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    pub time: f64,
    pub count: usize,
    pub discard_count: usize,
    /// `beta_i alpha_i`.
    pub two_point: Vec<Moment>,
    /// `beta_i^2 alpha_i^2`.
    pub four_point: Vec<Moment>,
    /// Per-trajectory sums over B sites of the two estimators.
    pub two_point_b_total: Moment,
    pub four_point_b_total: Moment,
}

impl EnsembleAccumulator {
    pub fn new(time: f64, sites: usize) -> Self {
        Self {
            time,
            count: 0,
            discard_count: 0,
            two_point: vec![Moment::default(); sites],
            four_point: vec![Moment::default(); sites],
            two_point_b_total: Moment::default(),
            four_point_b_total: Moment::default(),
        }
    }

    fn record(&mut self, s: &PhaseSpaceState) {
        self.count += 1;
        let mut tot2 = ZERO;
        let mut tot4 = ZERO;
        for i in 0..self.two_point.len() {
            let ba = s.beta[i] * s.alpha[i];
            let ba2 = ba * ba;
            self.two_point[i].add(ba);
            self.four_point[i].add(ba2);
            if i % 2 == 1 {
                tot2 += ba;
                tot4 += ba2;
            }
        }
        self.two_point_b_total.add(tot2);
        self.four_point_b_total.add(tot4);
    }

    /// Associative merge used for the fixed-order reduction.
    pub fn merge(&mut self, o: &EnsembleAccumulator) {
        self.count += o.count;
        self.discard_count += o.discard_count;
        for (a, b) in self.two_point.iter_mut().zip(&o.two_point) {
            a.merge(b);
        }
        for (a, b) in self.four_point.iter_mut().zip(&o.four_point) {
            a.merge(b);
        }
        self.two_point_b_total.merge(&o.two_point_b_total);
        self.four_point_b_total.merge(&o.four_point_b_total);
    }

    pub fn discard_fraction(&self) -> f64 {
        let all = self.count + self.discard_count;
        if all == 0 {
            0.0
        } else {
            self.discard_count as f64 / all as f64
        }
    }

    /// `n_B(x) = Re <<beta_xB alpha_xB>>`, one per cell.
    pub fn n_b(&self) -> Vec<Estimate> {
        self.two_point.iter().skip(1).step_by(2).map(|m| m.estimate(self.count)).collect()
    }

    /// `C_B(x) = Re <<beta_xB^2 alpha_xB^2>>`, one per cell.
    pub fn c_b(&self) -> Vec<Estimate> {
        self.four_point.iter().skip(1).step_by(2).map(|m| m.estimate(self.count)).collect()
    }

    pub fn n_b_total(&self) -> Estimate {
        self.two_point_b_total.estimate(self.count)
    }

    pub fn c_b_total(&self) -> Estimate {
        self.four_point_b_total.estimate(self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub records: Vec<EnsembleAccumulator>,
    pub generator: String,
    pub wall_time: f64,
}

fn record_steps(cfg: &SdeConfig) -> (usize, Vec<(usize, f64)>) {
    let total = (cfg.t_end / cfg.dt).round() as usize;
    let mut rec: Vec<(usize, f64)> =
        cfg.record_times.iter().map(|t| (((t / cfg.dt).round() as usize).min(total), *t)).collect();
    rec.sort_by_key(|r| r.0);
    (total, rec)
}

fn run_chunk(model: &PhaseSpaceModel, cfg: &SdeConfig, first: usize, last: usize) -> Vec<EnsembleAccumulator> {
    let n = model.sites();
    let (total, rec) = record_steps(cfg);
    let mut acc: Vec<EnsembleAccumulator> = rec.iter().map(|r| EnsembleAccumulator::new(r.1, n)).collect();
    let noisy = model.noisy_components();
    let sqdt = cfg.dt.sqrt();
    let mut dw = vec![0.0; 2 * n];
    let mut scratch = Scratch::new(n);
    for traj in first..last {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed.wrapping_add(traj as u64));
        let mut s = PhaseSpaceState::vacuum(n);
        let mut next = 0;
        let mut alive = true;
        while next < rec.len() && rec[next].0 == 0 {
            acc[next].record(&s);
            next += 1;
        }
        for step in 1..=total {
            if next >= rec.len() {
                break;
            }
            for &k in &noisy {
                let z: f64 = StandardNormal.sample(&mut rng);
                dw[k] = z * sqdt;
            }
            if !model.step_with(&mut s, &dw, cfg.dt, cfg.divergence_threshold, &mut scratch) {
                alive = false;
                break;
            }
            while next < rec.len() && rec[next].0 == step {
                acc[next].record(&s);
                next += 1;
            }
        }
        if !alive {
            for a in &mut acc[next..] {
                a.discard_count += 1;
            }
        }
    }
    acc
}

/// Simulate `n_traj` trajectories from vacuum and accumulate estimators at
/// each record time. Results are identical for any thread count.
pub fn run_ensemble(p: &ModelParams, cfg: &SdeConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let model = PhaseSpaceModel::new(p)?;
    let start = Instant::now();
    let chunks: Vec<(usize, usize)> =
        (0..cfg.n_traj).step_by(CHUNK).map(|a| (a, (a + CHUNK).min(cfg.n_traj))).collect();
    let parts: Vec<Vec<EnsembleAccumulator>> = if cfg.parallel {
        chunks.par_iter().map(|&(a, b)| run_chunk(&model, cfg, a, b)).collect()
    } else {
        chunks.iter().map(|&(a, b)| run_chunk(&model, cfg, a, b)).collect()
    };
    let mut parts = parts.into_iter();
    let mut records = parts.next().expect("at least one trajectory");
    for part in parts {
        for (a, b) in records.iter_mut().zip(&part) {
            a.merge(b);
        }
    }
    for r in &records {
        if r.discard_fraction() > MAX_DISCARD_FRACTION {
            return Err(Error::TooManyDivergences { fraction: r.discard_fraction(), time: r.time });
        }
    }
    Ok(EnsembleResult { records, generator: GENERATOR_NAME.to_string(), wall_time: start.elapsed().as_secs_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use proptest::prelude::*;

    fn fig3(cells: usize, x0: usize) -> ModelParams {
        ModelParams { gamma1: 0.0, gamma2: 0.01, ..ModelParams::quadratic(0.8, 1.0, 0.0, 100.0, cells, x0) }
    }

    fn random_state(n: usize, seed: u64) -> PhaseSpaceState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            Complex64::new(3.0 * a, 3.0 * b)
        };
        PhaseSpaceState { alpha: (0..n).map(|_| draw()).collect(), beta: (0..n).map(|_| draw()).collect(), time: 0.0 }
    }

    fn single_b_mode() -> ModelParams {
        ModelParams {
            t1: 0.0,
            gamma1: 0.0,
            gamma2: 0.01,
            gamma_g: 0.0,
            gamma_l: 0.0,
            ..ModelParams::quadratic(0.0, 1.0, 0.0, 0.0, 1, 1)
        }
    }

    #[test]
    fn drift_is_linear_without_two_body_loss() {
        let p = ModelParams { gamma2: 0.0, ..fig3(4, 2) };
        let m = PhaseSpaceModel::new(&p).unwrap();
        let s = random_state(8, 3);
        let d = m.drift(&s);
        let x = p.damping_matrix();
        let a = x.conjugate() * nalgebra::DVector::from_vec(s.alpha.clone());
        let b = &x * nalgebra::DVector::from_vec(s.beta.clone());
        for i in 0..8 {
            assert!((d[i] - a[i]).norm() < 1e-12 && (d[8 + i] - b[i]).norm() < 1e-12);
        }
        assert!(m.drift(&PhaseSpaceState::vacuum(8)).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn drift_of_single_b_mode() {
        let m = PhaseSpaceModel::new(&single_b_mode()).unwrap();
        let mut s = PhaseSpaceState::vacuum(2);
        s.alpha[1] = Complex64::new(1.0, 0.0);
        s.beta[1] = Complex64::new(1.0, 0.0);
        let d = m.drift(&s);
        assert!((d[1] - Complex64::new(-0.02, 0.0)).norm() < 1e-15);
        assert!((d[3] - Complex64::new(-0.02, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn noise_vanishes_without_sources() {
        let p = ModelParams { gamma2: 0.0, gamma_g: 0.0, gamma_l: 0.0, ..fig3(3, 2) };
        let m = PhaseSpaceModel::new(&p).unwrap();
        assert_eq!(frobenius(&m.noise_matrix(&random_state(6, 1))), 0.0);
    }

    #[test]
    fn pump_block_squares_to_cross_diffusion() {
        let p = ModelParams { gamma2: 0.0, ..fig3(2, 1) };
        let m = PhaseSpaceModel::new(&p).unwrap();
        let b = m.noise_matrix(&PhaseSpaceState::vacuum(4));
        let d = &b * b.transpose();
        assert!(d[(0, 0)].norm() < 1e-12 && d[(4, 4)].norm() < 1e-12);
        assert!((d[(0, 4)] - Complex64::new(200.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn noiseless_linear_step_is_explicit_euler() {
        let p =
            ModelParams { gamma2: 0.0, gamma_g: 0.0, gamma_l: 0.0, ..ModelParams::quadratic(0.8, 1.0, 0.8, 0.0, 4, 2) };
        let m = PhaseSpaceModel::new(&p).unwrap();
        let s0 = random_state(8, 9);
        let mut s = s0.clone();
        let dt = 1e-3;
        assert!(m.step(&mut s, &[0.0; 16], dt, 1e6));
        let d = m.drift(&s0);
        for i in 0..8 {
            assert!((s.alpha[i] - (s0.alpha[i] + d[i] * dt)).norm() <= 1e-14);
            assert!((s.beta[i] - (s0.beta[i] + d[8 + i] * dt)).norm() <= 1e-14);
        }
    }

    #[test]
    fn vacuum_is_absorbing_without_gain() {
        let p = ModelParams { gamma_g: 0.0, gamma_l: 0.0, ..fig3(5, 3) };
        let cfg = SdeConfig {
            dt: 1e-2,
            t_end: 2.0,
            n_traj: 4,
            record_times: vec![1.0, 2.0],
            parallel: false,
            ..Default::default()
        };
        let r = run_ensemble(&p, &cfg).unwrap();
        for rec in &r.records {
            assert!(rec.two_point.iter().all(|m| m.sum == ZERO && m.sumsq == ZERO));
        }
    }

    #[test]
    fn single_mode_gain_loss_oracle() {
        let (gg, gl) = (0.4, 1.0);
        let p = ModelParams { gamma2: 0.0, gamma_l: gl, ..ModelParams::quadratic(0.0, 1.0, 0.0, gg, 1, 1) };
        let cfg = SdeConfig { dt: 1e-3, t_end: 12.0, n_traj: 4000, record_times: vec![12.0], ..Default::default() };
        let r = run_ensemble(&p, &cfg).unwrap();
        let e = r.records[0].two_point[0].estimate(r.records[0].count);
        let want = gg / (gl - gg);
        assert!((e.mean - want).abs() < 3.0 * e.stderr, "{e:?} vs {want}");
    }

    #[test]
    fn deterministic_for_any_thread_layout() {
        let p = fig3(4, 3);
        let cfg = SdeConfig {
            dt: 2e-3,
            t_end: 1.0,
            n_traj: 70,
            base_seed: 42,
            record_times: vec![0.5, 1.0],
            parallel: false,
            ..Default::default()
        };
        let a = run_ensemble(&p, &cfg).unwrap();
        let b = run_ensemble(&p, &cfg).unwrap();
        let c = run_ensemble(&p, &SdeConfig { parallel: true, ..cfg.clone() }).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, c.records);
        let d = run_ensemble(&p, &SdeConfig { base_seed: 43, ..cfg }).unwrap();
        assert_ne!(a.records, d.records);
    }

    #[test]
    fn divergent_trajectories_are_counted() {
        let p = fig3(3, 2);
        let cfg = SdeConfig {
            dt: 2e-3,
            t_end: 1.0,
            n_traj: 8,
            divergence_threshold: 1e-3,
            record_times: vec![1.0],
            parallel: false,
            ..Default::default()
        };
        match run_ensemble(&p, &cfg) {
            Err(Error::TooManyDivergences { fraction, .. }) => assert_eq!(fraction, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn moment_merge_matches_sequential() {
        let mut a = EnsembleAccumulator::new(1.0, 4);
        let mut b = EnsembleAccumulator::new(1.0, 4);
        let mut all = EnsembleAccumulator::new(1.0, 4);
        for seed in 0..6 {
            let s = random_state(4, seed);
            if seed < 3 {
                a.record(&s)
            } else {
                b.record(&s)
            }
            all.record(&s);
        }
        a.merge(&b);
        assert_eq!(a.count, all.count);
        for (x, y) in a.two_point.iter().zip(&all.two_point) {
            assert!((x.sum - y.sum).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn noise_squares_to_diffusion(seed in 0u64..10_000, pump in 1usize..4) {
            let p = fig3(3, pump);
            let m = PhaseSpaceModel::new(&p).unwrap();
            let s = random_state(6, seed);
            let b = m.noise_matrix(&s);
            let d = m.diffusion_matrix(&s);
            let diff = &b * b.transpose() - &d;
            prop_assert!(diff.iter().all(|z| z.norm() <= 1e-12 * (1.0 + d.iter().fold(0.0f64, |a, z| a.max(z.norm())))));
        }

        #[test]
        fn loss_noise_is_principal_root(re in -5.0f64..5.0, im in -5.0f64..5.0) {
            let z = Complex64::new(re, im);
            let w = loss_noise(0.2f64.sqrt(), z);
            let principal = (z * z * -0.2).sqrt();
            prop_assert!((w - principal).norm() < 1e-12 * (1.0 + z.norm()));
        }
    }
}
