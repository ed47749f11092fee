use edgeburst::analysis;
use edgeburst::linalg;
use edgeburst::quadrature::QuadratureOptions;
use edgeburst::spectral;
use edgeburst::steady::*;
use edgeburst::ModelParams;

fn fig1(cells: usize, x0: usize) -> ModelParams {
    ModelParams::quadratic(0.8, 1.0, 0.8, 0.8, cells, x0)
}

#[test]
fn quench_and_lyapunov_correspondence_small_chain() {
    let p = fig1(20, 15);
    let q = quench_loss(&p, 150.0, 0.01, None, 1e-6).unwrap();
    let s = solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()).unwrap();
    let ratio = p.gamma_g / p.gamma1;
    for (n, px) in s.state.b_densities().iter().zip(&q.profile.values) {
        assert!((n - ratio * px).abs() <= 1e-4 * n.abs(), "{n} vs {px}");
    }
}

#[test]
fn integral_matches_lyapunov_small_chain() {
    let p = fig1(20, 15);
    let s = solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()).unwrap();
    let w = steady_density_integral(&p, &QuadratureOptions::default()).unwrap();
    for (a, b) in s.state.b_densities().iter().zip(&w.n_b.values) {
        assert!((a - b).abs() <= 1e-7 * a.abs(), "{a} vs {b}");
    }
    assert!((w.n_b.total - p.gamma_g / p.gamma1).abs() < 1e-6);
}

#[test]
fn steady_state_is_hermitian_psd() {
    for (t1, x0) in [(0.5, 10), (0.8, 20), (1.2, 5)] {
        let p = ModelParams::quadratic(t1, 1.0, 0.8, 0.8, 24, x0);
        let s = solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()).unwrap();
        assert!(s.state.hermiticity_defect() < 1e-10);
        assert!(s.state.min_eigenvalue() > -1e-8);
        assert!(s.state.residual < 1e-8);
    }
}

#[test]
fn right_of_pump_decays_with_inner_root() {
    let p = ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 60, 50);
    let w = steady_density_integral(&p, &QuadratureOptions::default()).unwrap();
    let pts: Vec<(f64, f64)> = (52..=57).map(|x| (x as f64, w.n_b.values[x - 1].ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let w0 = spectral::gapless_point(&p).unwrap().omega0;
    let want = 2.0 * spectral::beta_roots(&p, w0).unwrap().beta_r.norm().ln();
    assert!((slope / want - 1.0).abs() < 0.05, "{slope} vs {want}");
}

#[test]
fn imbalance_keeps_profile_shape() {
    let base = ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 200, 180);
    let fit = |dg: f64| {
        let p = ModelParams { gamma_g: 0.8 + dg, ..base };
        let w = steady_density_integral(&p, &QuadratureOptions::default()).unwrap();
        analysis::fit_bulk(&w.n_b.values, 180, None).unwrap().exponent
    };
    let b0 = fit(0.0);
    for dg in [0.1, 0.2, -0.2] {
        assert!((fit(dg) - b0).abs() < 0.05, "dg={dg}");
    }
}

#[test]
fn integral_rejects_supercritical_imbalance() {
    let p = ModelParams { gamma_g: 0.8 + 0.7, ..ModelParams::quadratic(0.5, 1.0, 0.8, 0.8, 40, 20) };
    assert!(steady_density_integral(&p, &QuadratureOptions::default()).is_err());
    assert!(solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()).is_err());
}

#[test]
fn eigen_route_reports_ill_conditioning_on_long_chains() {
    let p = fig1(60, 50);
    match solve_lyapunov_eigen(&p.damping_matrix(), &p.gain_matrix()) {
        Ok(s) => {
            let exact = solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()).unwrap();
            let d = linalg::frobenius(&(&s.state.delta - &exact.state.delta));
            assert!(d < 1e-6);
        }
        Err(e) => assert!(matches!(e, edgeburst::Error::IllConditioned(_)), "{e}"),
    }
}
