//! Momentum-space and GBZ analytics for the balanced chain.
//!
//! The Bloch damping matrix uses the same Fourier convention as the real-space
//! matrices, `X_{xy} = (1/2pi) int dk X(k) e^{ik(x-y)}`, which gives
//! `X(k) = i H(-k)^*`. With `beta = e^{ik}`, `beta det[i w - X(beta)]` is the
//! quadratic `a beta^2 + b beta + c0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, I};
use crate::model::{self, Boundary, ModelParams};

pub const DEGENERACY_TOL: f64 = 1e-12;
pub const RESONANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPair {
    /// Outside the GBZ circle.
    pub beta_l: Complex64,
    /// Inside the GBZ circle.
    pub beta_r: Complex64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaplessPoint {
    /// Positive gapless frequency `sqrt(t2^2 - t1^2)`.
    pub omega0: f64,
    /// Zero-real-part eigenvalue of `X(k0)`.
    pub eigenvalue: Complex64,
    /// Momentum in `[pi/2, pi]` solving `t1 + t2 cos k0 = 0`.
    pub k0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub omega0: f64,
    /// `ln |beta_L(omega0 + d)| ~ K d^2`.
    pub k: f64,
    /// `f_L(omega0 + d) ~ slope * d`.
    pub f_l_slope: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbcSpectrum {
    pub k: Vec<f64>,
    pub eigenvalues: Vec<[Complex64; 2]>,
    /// Maximum real part after golden-section refinement.
    pub max_re: f64,
    pub argmax_k: f64,
}

/// Bloch damping matrix `X(k) = i H(-k)^*`.
pub fn damping_bloch(p: &ModelParams, k: f64) -> ComplexMatrix {
    let s = p.t2 * k.sin();
    let c = p.t1 + p.t2 * k.cos();
    ComplexMatrix::from_row_slice(2, 2, &[Complex64::new(0.0, -s), I * c, I * c, Complex64::new(-p.gamma1, s)])
}

/// Closed-form eigenvalues of `X(k)`, larger real part first.
pub fn damping_bloch_eigenvalues(p: &ModelParams, k: f64) -> [Complex64; 2] {
    let s = p.t2 * k.sin();
    let c = p.t1 + p.t2 * k.cos();
    let half = Complex64::new(0.5 * p.gamma1, -s);
    let root = (half * half - c * c).sqrt();
    let center = Complex64::new(-0.5 * p.gamma1, 0.0);
    let (l1, l2) = (center + root, center - root);
    if l1.re >= l2.re {
        [l1, l2]
    } else {
        [l2, l1]
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Both eigenvalues of `X(k)` on `nk` uniform momenta in `[-pi, pi)`.
pub fn pbc_spectrum(p: &ModelParams, nk: usize) -> Result<PbcSpectrum> {
    if nk < 2 {
        return Err(Error::InvalidParameter(format!("nk must be >= 2, got {nk}")));
    }
    let pi = std::f64::consts::PI;
    let step = 2.0 * pi / nk as f64;
    let k: Vec<f64> = (0..nk).map(|j| -pi + step * j as f64).collect();
    let eigenvalues: Vec<[Complex64; 2]> = k.iter().map(|&k| damping_bloch_eigenvalues(p, k)).collect();
    let (best, _) = eigenvalues.iter().enumerate().map(|(j, e)| (j, e[0].re)).fold((0, f64::NEG_INFINITY), |acc, x| {
        if x.1 > acc.1 {
            x
        } else {
            acc
        }
    });
    let (argmax_k, max_re) =
        golden_max(|q| damping_bloch_eigenvalues(p, q)[0].re, k[best] - step, k[best] + step, 1e-12);
    let grid_max = eigenvalues[best][0].re;
    let (argmax_k, max_re) = if grid_max > max_re { (k[best], grid_max) } else { (argmax_k, max_re) };
    Ok(PbcSpectrum { k, eigenvalues, max_re, argmax_k })
}

pub fn gapless_point(p: &ModelParams) -> Result<GaplessPoint> {
    if !(p.t1 > 0.0 && p.t1 <= p.t2) {
        return Err(Error::NotGapless { t1: p.t1, t2: p.t2 });
    }
    let k0 = (-p.t1 / p.t2).acos();
    let s = p.t2 * k0.sin();
    Ok(GaplessPoint { omega0: s, eigenvalue: Complex64::new(0.0, -s), k0 })
}

fn quadratic_coefficients(p: &ModelParams, omega: f64) -> (f64, Complex64, f64) {
    let g = p.gamma1;
    let a = p.t2 * (p.t1 + 0.5 * g);
    let b = Complex64::new(p.t1 * p.t1 + p.t2 * p.t2 - omega * omega, omega * g);
    let c0 = p.t2 * (p.t1 - 0.5 * g);
    (a, b, c0)
}

/// Roots of `beta det[i w - X(beta)] = 0`, labelled so `|beta_R| <= |beta_L|`.
pub fn beta_roots(p: &ModelParams, omega: f64) -> Result<BetaPair> {
    let (a, b, c0) = quadratic_coefficients(p, omega);
    if a.abs() < DEGENERACY_TOL {
        return Err(Error::InvalidParameter("t2 (t1 + gamma1/2) vanishes; beta equation is not quadratic".into()));
    }
    let disc = (b * b - 4.0 * a * c0).sqrt();
    // Cancellation-free pair: q has the larger modulus of -(b +- disc)/2.
    let q = if (b + disc).norm() >= (b - disc).norm() { -(b + disc) * 0.5 } else { -(b - disc) * 0.5 };
    let r1 = q / a;
    let r2 = if q.norm() > 0.0 { c0 / q } else { Complex64::new(0.0, 0.0) };
    let (beta_l, beta_r) = if r1.norm() >= r2.norm() { (r1, r2) } else { (r2, r1) };
    let gap = beta_l.norm() - beta_r.norm();
    if gap < DEGENERACY_TOL {
        return Err(Error::DegenerateRoots { gap });
    }
    Ok(BetaPair { beta_l, beta_r, omega })
}

pub fn gbz_radius(p: &ModelParams) -> f64 {
    let g = 0.5 * p.gamma1;
    ((p.t1 - g) / (p.t1 + g)).abs().sqrt()
}

/// Coefficient `f_L(w) = i c(beta_L) / (a (beta_L - beta_R))`, with
/// `c(beta) = t1 + t2 (beta + 1/beta) / 2`. Left of the pump,
/// `|<xB|(i w - X)^{-1}|x0 A>| = |f_L| |beta_L|^{x - x0}` in the bulk.
pub fn left_residue(p: &ModelParams, omega: f64) -> Result<Complex64> {
    let roots = beta_roots(p, omega)?;
    let (a, _, _) = quadratic_coefficients(p, omega);
    let bl = roots.beta_l;
    let c = p.t1 + 0.5 * p.t2 * (bl + 1.0 / bl);
    Ok(I * c / (a * (bl - roots.beta_r)))
}

fn require_gapless_strict(p: &ModelParams) -> Result<()> {
    if p.t1 > 0.0 && p.t1 < p.t2 {
        Ok(())
    } else {
        Err(Error::NotGapless { t1: p.t1, t2: p.t2 })
    }
}

pub fn expansion_coefficients(p: &ModelParams) -> Result<ExpansionCoefficients> {
    require_gapless_strict(p)?;
    let (t1, t2, g) = (p.t1, p.t2, p.gamma1);
    let w2 = t2 * t2 - t1 * t1;
    let w = w2.sqrt();
    Ok(ExpansionCoefficients {
        omega0: w,
        k: g * w2 / (t1.powi(3) * (4.0 * w2 + g * g)),
        f_l_slope: -w / (t1 * t1 * Complex64::new(2.0 * w, -g)),
    })
}

/// Bulk on-site Green's function `<x0 A|(i w - X)^{-1}|x0 A>` of the infinite
/// chain: residues at `beta_R` and at `beta = 0` inside the GBZ.
pub fn onsite_greens_aa(p: &ModelParams, omega: f64) -> Result<Complex64> {
    let roots = beta_roots(p, omega)?;
    let r = gbz_radius(p);
    for beta in [roots.beta_l, roots.beta_r] {
        let distance = (beta.norm() - r).abs();
        if distance < DEGENERACY_TOL {
            return Err(Error::PoleOnContour { distance });
        }
    }
    let origin = 2.0 * p.t1 - p.gamma1;
    if origin.abs() < DEGENERACY_TOL {
        return Err(Error::PoleOnContour { distance: origin.abs() });
    }
    let (a, _, _) = quadratic_coefficients(p, omega);
    let br = roots.beta_r;
    let num = I * omega - 0.5 * p.t2 * (br - 1.0 / br) + p.gamma1;
    Ok(num / (a * (br - roots.beta_l)) + 1.0 / origin)
}

/// Pump-site imbalance beyond which the OBC steady state is lost.
pub fn critical_imbalance(p: &ModelParams) -> Result<f64> {
    require_gapless_strict(p)?;
    let (t1, g) = (p.t1, p.gamma1);
    Ok(t1 * (2.0 * t1 + g) / (t1 + g))
}

/// Spatially uniform rescaling `1 / (1 - dgamma G_AA(w))` of the resolvent.
pub fn impurity_factor(p: &ModelParams, delta_gamma: f64, omega: f64) -> Result<Complex64> {
    let g = onsite_greens_aa(p, omega)?;
    let denom = 1.0 - delta_gamma * g;
    if denom.norm() < RESONANCE_TOL {
        return Err(Error::Resonance { magnitude: denom.norm() });
    }
    Ok(1.0 / denom)
}

/// Samples of both roots on `n` uniform frequencies in `[-omega_max, omega_max]`.
pub fn beta_scan(p: &ModelParams, omega_max: f64, n: usize) -> Result<Vec<BetaPair>> {
    let n = n.max(2);
    (0..n).map(|j| beta_roots(p, -omega_max + 2.0 * omega_max * j as f64 / (n - 1) as f64)).collect()
}

/// Default frequency window for scans, `2 (|t1| + |t2| + gamma1 + 1)`.
pub fn scan_window(p: &ModelParams) -> f64 {
    2.0 * (p.t1.abs() + p.t2.abs() + p.gamma1 + 1.0)
}

/// Extremum of `|beta(w)|` over `[-omega_max, omega_max]`: coarse scan then
/// golden-section refinement. Returns `(omega, modulus)`.
pub fn beta_extremum(p: &ModelParams, omega_max: f64, n: usize, pick: impl Fn(&BetaPair) -> f64) -> Result<(f64, f64)> {
    let scan = beta_scan(p, omega_max, n)?;
    let step = 2.0 * omega_max / (scan.len() - 1) as f64;
    let (best, _) = scan.iter().enumerate().map(|(j, b)| (j, pick(b))).fold((0, f64::NEG_INFINITY), |acc, x| {
        if x.1 > acc.1 {
            x
        } else {
            acc
        }
    });
    let w = scan[best].omega;
    let f = |q: f64| beta_roots(p, q).map(|b| pick(&b)).unwrap_or(f64::NEG_INFINITY);
    let (wq, vq) = golden_max(f, w - step, w + step, 1e-12);
    Ok(if vq >= pick(&scan[best]) { (wq, vq) } else { (w, pick(&scan[best])) })
}

/// Max real part of the OBC damping matrix with pump imbalance `delta_gamma`.
pub fn obc_max_real(p: &ModelParams, delta_gamma: f64) -> Result<f64> {
    let q = ModelParams { bc: Boundary::OBC, gamma_l: p.gamma_g - delta_gamma, ..*p };
    let mut x = q.balanced_damping_matrix();
    let s = q.pump_site();
    x[(s, s)] += Complex64::new(delta_gamma, 0.0);
    Ok(model::stability_check(&x)?.max_re)
}

/// Bisection for the imbalance at which the OBC max real part crosses
/// `+STABILITY_EPS`, given a bracket `lo` stable and `hi` unstable.
pub fn instability_onset(p: &ModelParams, mut lo: f64, mut hi: f64, rel_tol: f64) -> Result<f64> {
    let unstable = |d: f64| obc_max_real(p, d).map(|m| m > model::STABILITY_EPS);
    if unstable(lo)? || !unstable(hi)? {
        return Err(Error::InvalidParameter(format!(
            "imbalance bracket [{lo}, {hi}] does not straddle the instability"
        )));
    }
    while hi - lo > rel_tol * hi.abs() {
        let mid = 0.5 * (lo + hi);
        if unstable(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, BlockTridiagonal};
    use proptest::prelude::*;

    fn fig2() -> ModelParams {
        ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 60, 30)
    }

    #[test]
    fn bloch_damping_matches_closed_form_eigenvalues() {
        let p = fig2();
        for k in [-2.0, -0.3, 0.0, 1.1, 2.9] {
            let num = linalg::eigenvalues(&damping_bloch(&p, k)).unwrap();
            for z in damping_bloch_eigenvalues(&p, k) {
                assert!(num.iter().any(|w| (w - z).norm() < 1e-12), "k={k} {z} {num:?}");
            }
        }
    }

    #[test]
    fn bloch_damping_spectrum_is_i_conj_bloch_hamiltonian_spectrum() {
        let p = fig2();
        for k in [0.4, 2.2] {
            let a = linalg::eigenvalues(&damping_bloch(&p, k)).unwrap();
            let b = linalg::eigenvalues(&p.bloch_hamiltonian(-k).map(|z| I * z.conj())).unwrap();
            for z in &a {
                assert!(b.iter().any(|w| (w - z).norm() < 1e-12));
            }
        }
    }

    #[test]
    fn pbc_spectrum_gapless_at_decoupling_momentum() {
        let p = fig2();
        let s = pbc_spectrum(&p, 2001).unwrap();
        assert!(s.max_re.abs() < 1e-9, "{}", s.max_re);
        assert!((p.t1 + p.t2 * s.argmax_k.cos()).abs() < 1e-5);
        let gp = gapless_point(&p).unwrap();
        assert!((p.t1 + p.t2 * gp.k0.cos()).abs() < 1e-12);
        assert!((gp.eigenvalue.im.abs() - 0.75f64.sqrt()).abs() < 1e-12);
        let at_k0 = damping_bloch_eigenvalues(&p, gp.k0)[0];
        assert!((at_k0 - gp.eigenvalue).norm() < 1e-12);
        let mirrored = damping_bloch_eigenvalues(&p, -gp.k0)[0];
        assert!((mirrored + gp.eigenvalue).norm() < 1e-12);
    }

    #[test]
    fn pbc_spectrum_gapped_when_t1_exceeds_t2() {
        let p = ModelParams::quadratic(1.2, 1.0, 0.8, 0.8, 60, 30);
        assert!(pbc_spectrum(&p, 2001).unwrap().max_re < -1e-3);
        assert!(gapless_point(&p).is_err());
    }

    #[test]
    fn beta_roots_at_gapless_frequency() {
        let p = fig2();
        let w0 = 0.75f64.sqrt();
        let r = beta_roots(&p, w0).unwrap();
        assert!((r.beta_l - Complex64::new(-0.5, -w0)).norm() < 1e-12);
        assert!((r.beta_r - Complex64::new(-0.5, w0) / 9.0).norm() < 1e-12);
        assert!(((r.beta_l * r.beta_r).norm() - 1.0 / 9.0).abs() < 1e-12);
        assert!((r.beta_l.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gbz_radius_values() {
        assert!((gbz_radius(&fig2()) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gbz_radius(&ModelParams { gamma1: 0.0, ..fig2() }), 1.0);
    }

    #[test]
    fn expansion_coefficients_closed_form_and_finite_differences() {
        let p = fig2();
        let e = expansion_coefficients(&p).unwrap();
        assert!((e.k - 0.6 / 0.455).abs() < 1e-12);
        let d = 1e-3;
        let fd = beta_roots(&p, e.omega0 + d).unwrap().beta_l.norm().ln() / (d * d);
        assert!((fd / e.k - 1.0).abs() < 1e-3, "{fd} vs {}", e.k);
        let d = 1e-4;
        let slope = left_residue(&p, e.omega0 + d).unwrap() / d;
        assert!((slope - e.f_l_slope).norm() / e.f_l_slope.norm() < 1e-3);
        assert!(matches!(expansion_coefficients(&ModelParams { t1: 1.0, ..p }), Err(Error::NotGapless { .. })));
    }

    #[test]
    fn onsite_green_function_at_gapless_frequency() {
        let p = fig2();
        let w0 = 0.75f64.sqrt();
        let g = onsite_greens_aa(&p, w0).unwrap();
        assert!((g.re - 1.3 / 0.9).abs() < 1e-10 && g.im.abs() < 1e-10, "{g}");
        let h = 1e-5;
        let deriv = (onsite_greens_aa(&p, w0 + h).unwrap() - onsite_greens_aa(&p, w0 - h).unwrap()) / (2.0 * h);
        let (t1, t2, gm) = (p.t1, p.t2, p.gamma1);
        let w = (t2 * t2 - t1 * t1).sqrt();
        let k1 = gm * w / (t1.powi(3) * Complex64::new(gm, 2.0 * w));
        assert!((deriv - k1).norm() / k1.norm() < 1e-4, "{deriv} vs {k1}");
    }

    #[test]
    fn onsite_green_function_matches_long_chain_resolvent() {
        let p = ModelParams { cells: 200, x0: 100, ..fig2() };
        let bt = BlockTridiagonal::from_dense(&p.damping_matrix()).unwrap();
        let omega = 0.3;
        let g = bt.solve_shifted_unit(I * omega, p.pump_site()).unwrap();
        let want = onsite_greens_aa(&p, omega).unwrap();
        assert!((g[p.pump_site()] - want).norm() < 1e-4, "{} vs {want}", g[p.pump_site()]);
    }

    #[test]
    fn critical_imbalance_values() {
        let p = fig2();
        assert!((critical_imbalance(&p).unwrap() - 9.0 / 13.0).abs() < 1e-15);
        let clean = ModelParams { gamma1: 0.0, ..p };
        assert!((critical_imbalance(&clean).unwrap() - 1.0).abs() < 1e-15);
        let w0 = 0.75f64.sqrt();
        let g = onsite_greens_aa(&p, w0).unwrap();
        assert!((critical_imbalance(&p).unwrap() * g.re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn impurity_factor_values() {
        let p = fig2();
        let w0 = 0.75f64.sqrt();
        for w in [-1.0, 0.2, w0] {
            assert!((impurity_factor(&p, 0.0, w).unwrap() - 1.0).norm() < 1e-15);
        }
        let n = impurity_factor(&p, 0.2, w0).unwrap();
        assert!((n.re - 1.40625).abs() < 1e-9 && n.im.abs() < 1e-9, "{n}");
        assert!(matches!(impurity_factor(&p, 9.0 / 13.0, w0), Err(Error::Resonance { .. })));
    }

    #[test]
    fn beta_modulus_extrema() {
        let p = fig2();
        let w0 = 0.75f64.sqrt();
        let window = scan_window(&p);
        let scan = beta_scan(&p, window, 2001).unwrap();
        assert!(scan.iter().all(|b| b.beta_l.norm() >= 1.0 - 1e-12));
        let (w_min, m) = beta_extremum(&p, window, 2001, |b| -b.beta_l.norm()).unwrap();
        assert!((w_min.abs() - w0).abs() < 1e-5 && (-m - 1.0).abs() < 1e-10);
        let (w_max, m) = beta_extremum(&p, window, 2001, |b| b.beta_r.norm()).unwrap();
        assert!((w_max.abs() - w0).abs() < 1e-5, "{w_max}");
        assert!((m - beta_roots(&p, w0).unwrap().beta_r.norm()).abs() < 1e-10 && m < 1.0);
    }

    proptest! {
        #[test]
        fn root_product_is_gbz_radius_squared(omega in -6.0f64..6.0) {
            let p = fig2();
            let r = beta_roots(&p, omega).unwrap();
            prop_assert!(((r.beta_l * r.beta_r).norm() - gbz_radius(&p).powi(2)).abs() < 1e-10);
            prop_assert!(r.beta_r.norm() <= r.beta_l.norm());
            prop_assert!(r.beta_r.norm() < gbz_radius(&p) && r.beta_l.norm() > gbz_radius(&p));
        }

        #[test]
        fn gapless_iff_t1_within_t2(t1 in 0.05f64..2.0, g in 0.1f64..1.5) {
            prop_assume!((t1 - 1.0).abs() > 0.05);
            let p = ModelParams::quadratic(t1, 1.0, g, 0.8, 10, 5);
            let m = pbc_spectrum(&p, 801).unwrap().max_re;
            if t1 <= 1.0 {
                prop_assert!(m.abs() < 1e-9, "t1={t1} max_re={m}");
            } else {
                prop_assert!(m < -1e-9);
            }
        }
    }
}
