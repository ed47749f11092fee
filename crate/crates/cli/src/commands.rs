use std::path::PathBuf;

use edgeburst::analysis::{self, SumRule, SweepProfile};
use edgeburst::linalg::{self, ComplexMatrix};
use edgeburst::meanfield::evolve_meanfield;
use edgeburst::model::{self, stability_check};
use edgeburst::positivep::{run_ensemble, Estimate};
use edgeburst::quadrature::QuadratureOptions;
use edgeburst::steady::{self, CorrelatorState, LyapunovSolver};
use edgeburst::{spectral, Boundary, ModelParams, Statistics};
use log::info;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::artifacts::{profile_name, read_profile_csv, x0_from_name, Artifacts};
use crate::config::{InitialState, RunConfig, SteadyMethod};
use crate::error::{CliResult, Failure};

const QUENCH_DT: f64 = 0.01;
/// Largest matrix dimension for which a cross-route check runs by default.
const CORRESPONDENCE_MAX_DIM: usize = 400;

fn cell_rows(values: &[f64]) -> impl Iterator<Item = Vec<f64>> + '_ {
    values.iter().enumerate().map(|(i, v)| vec![(i + 1) as f64, *v])
}

fn max_relative(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs() / u.abs().max(v.abs()).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

fn estimate_json(e: &Estimate) -> Value {
    json!({ "mean": e.mean, "stderr": e.stderr, "imag": e.imag, "imag_stderr": e.imag_stderr })
}

pub fn spectrum(cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<Value> {
    let p = *cfg.model()?;
    let s = spectral::pbc_spectrum(&p, cfg.solver.nk)?;
    art.write_csv(
        &format!("{prefix}spectrum_pbc.csv"),
        &["k", "re_1", "im_1", "re_2", "im_2"],
        s.k.iter().zip(&s.eigenvalues).map(|(k, [a, b])| vec![*k, a.re, a.im, b.re, b.im]),
    )?;
    let mut summary = json!({
        "max_re": s.max_re,
        "argmax_k": s.argmax_k,
        "gapless": s.max_re >= -model::STABILITY_EPS,
        "omega0": spectral::gapless_point(&p).ok().map(|g| g.omega0),
        "K": spectral::expansion_coefficients(&p).ok().map(|e| e.k),
        "delta_gamma_c": spectral::critical_imbalance(&p).ok(),
        "gbz_radius": spectral::gbz_radius(&p),
    });
    if cfg.solver.obc_spectrum {
        let x = ModelParams { bc: Boundary::OBC, ..p }.damping_matrix();
        let mut ev = linalg::eigenvalues(&x)?;
        ev.sort_by(|a, b| a.im.total_cmp(&b.im).then(a.re.total_cmp(&b.re)));
        art.write_csv(&format!("{prefix}spectrum_obc.csv"), &["re", "im"], ev.iter().map(|z| vec![z.re, z.im]))?;
        let st = stability_check(&x)?;
        summary["obc_max_re"] = json!(st.max_re);
        summary["obc_stability"] = json!(st.class);
    }
    if cfg.solver.beta_scan > 0 {
        let scan = spectral::beta_scan(&p, spectral::scan_window(&p), cfg.solver.beta_scan)?;
        art.write_csv(
            &format!("{prefix}beta_scan.csv"),
            &["omega", "abs_beta_l", "abs_beta_r", "re_beta_l", "im_beta_l", "re_beta_r", "im_beta_r"],
            scan.iter().map(|b| {
                vec![b.omega, b.beta_l.norm(), b.beta_r.norm(), b.beta_l.re, b.beta_l.im, b.beta_r.re, b.beta_r.im]
            }),
        )?;
    }
    art.write_json(&format!("{prefix}spectrum_summary.json"), &summary)?;
    Ok(summary)
}

fn correspondence_applies(p: &ModelParams) -> bool {
    p.gamma1 > 0.0
        && p.delta_gamma() == 0.0
        && p.bc == Boundary::OBC
        && p.statistics == Statistics::Bosonic
        && p.dim() <= CORRESPONDENCE_MAX_DIM
}

/// Largest relative deviation from `n_B = (gamma_g / gamma1) P_x`, computing
/// whichever side is missing. Null when the identity does not apply.
fn correspondence(cfg: &RunConfig, p: &ModelParams, n_b: Option<&[f64]>, loss: Option<&[f64]>) -> Value {
    if !cfg.solver.correspondence || !correspondence_applies(p) {
        return Value::Null;
    }
    let n_b = match n_b {
        Some(n) => n.to_vec(),
        None => match steady::solve_lyapunov(&p.damping_matrix(), &p.gain_matrix()) {
            Ok(s) => s.state.b_densities(),
            Err(e) => return json!({ "error": e.to_string() }),
        },
    };
    let loss = match loss {
        Some(l) => l.to_vec(),
        None => match steady::quench_loss(p, cfg.solver.t_max, QUENCH_DT, None, cfg.solver.norm_tol) {
            Ok(q) => q.profile.values,
            Err(e) => return json!({ "error": e.to_string() }),
        },
    };
    let scaled: Vec<f64> = loss.iter().map(|v| v * p.gamma_g / p.gamma1).collect();
    json!(max_relative(&n_b, &scaled))
}

fn write_edge(art: &mut Artifacts, name: &str, header: &[&str], rows: Vec<Vec<f64>>) -> CliResult<()> {
    if rows.len() > 1 {
        art.write_csv(name, header, rows)?;
    }
    Ok(())
}

pub fn quench(cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<Value> {
    let base = *cfg.model()?;
    let dt = cfg.solver.dt.unwrap_or(QUENCH_DT);
    let mut runs = Vec::new();
    let mut edge = Vec::new();
    for x0 in cfg.pumps()? {
        let p = base.with_x0(x0);
        p.validate()?;
        info!("quench x0={x0}");
        let q = steady::quench_loss(&p, cfg.solver.t_max, dt, cfg.solver.record_every, cfg.solver.norm_tol)?;
        let v = &q.profile.values;
        art.write_csv(&format!("{prefix}{}", profile_name("quench", x0)), &["x", "P"], cell_rows(v))?;
        if cfg.solver.record_every.is_some() {
            let rows = q
                .snapshots
                .iter()
                .flat_map(|s| s.profile.values.iter().enumerate().map(move |(i, v)| vec![s.time, (i + 1) as f64, *v]));
            art.write_csv(&format!("{prefix}quench_history_{x0:03}.csv"), &["t", "x", "P"], rows)?;
        }
        runs.push(json!({
            "x0": x0,
            "total": q.profile.total,
            "edge_ratio": v[0] / v.get(1).copied().unwrap_or(f64::NAN),
            "residual_norm": q.residual_norm,
            "max_balance_defect": q.max_balance_defect,
            "steps": q.steps,
            "correspondence_error": correspondence(cfg, &p, None, Some(v)),
        }));
        edge.push(vec![(x0 - 1) as f64, v[0]]);
    }
    write_edge(art, &format!("{prefix}quench_edge.csv"), &["distance", "P_1"], edge)?;
    let summary = json!({ "runs": runs });
    art.write_json(&format!("{prefix}quench_summary.json"), &summary)?;
    Ok(summary)
}

fn initial_state(cfg: &RunConfig, p: &ModelParams) -> CorrelatorState {
    let mut s = CorrelatorState::zeros(p.dim());
    if cfg.solver.initial == InitialState::RandomA {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed);
        for x in 0..p.cells {
            if rng.random_bool(0.5) {
                s.delta[(2 * x, 2 * x)] = Complex64::new(1.0, 0.0);
            }
        }
    }
    s
}

pub fn steady(cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<Value> {
    let base = *cfg.model()?;
    let method = cfg.solver.method;
    // A balanced damping matrix does not depend on the pump cell.
    let shared: Option<LyapunovSolver> = if method == SteadyMethod::Lyapunov && base.delta_gamma() == 0.0 {
        Some(LyapunovSolver::new(&base.damping_matrix())?)
    } else {
        None
    };
    let quad = QuadratureOptions {
        rel_tol: cfg.solver.rel_tol,
        max_intervals: cfg.solver.max_intervals,
        ..QuadratureOptions::default()
    };
    let mut runs = Vec::new();
    let mut edge = Vec::new();
    for x0 in cfg.pumps()? {
        let p = base.with_x0(x0);
        p.validate()?;
        info!("steady x0={x0} via {method:?}");
        let (x, m): (ComplexMatrix, ComplexMatrix) = (p.damping_matrix(), p.gain_matrix());
        let (n, diag) = match method {
            SteadyMethod::Lyapunov | SteadyMethod::Eigen => {
                let s = match (&shared, method) {
                    (Some(solver), _) => solver.solve(&m)?,
                    (None, SteadyMethod::Eigen) => steady::solve_lyapunov_eigen(&x, &m)?,
                    (None, _) => steady::solve_lyapunov(&x, &m)?,
                };
                let d = json!({
                    "residual": s.state.residual,
                    "dropped_pairs": s.dropped_pairs,
                    "max_re": s.max_re,
                    "hermiticity_defect": s.state.hermiticity_defect(),
                });
                (s.state.b_densities(), d)
            }
            SteadyMethod::Integral => {
                let d = steady::steady_density_integral(&p, &quad)?;
                let worst = d.errors.iter().copied().fold(0.0, f64::max);
                (d.n_b.values, json!({ "max_quadrature_error": worst, "evaluations": d.evaluations }))
            }
            SteadyMethod::Time => {
                let dt = match cfg.solver.dt {
                    Some(dt) => dt,
                    None => steady::default_dt(&x)?,
                };
                let hist = steady::evolve_correlator(
                    &x,
                    &m,
                    &initial_state(cfg, &p),
                    cfg.solver.t_max,
                    dt,
                    cfg.solver.record_every,
                )?;
                if cfg.solver.record_every.is_some() {
                    let rows = hist.iter().flat_map(|s| {
                        s.b_densities().into_iter().enumerate().map(move |(i, v)| vec![s.time, (i + 1) as f64, v])
                    });
                    art.write_csv(&format!("{prefix}steady_history_{x0:03}.csv"), &["t", "x", "n_B"], rows)?;
                }
                let last = hist.last().expect("history holds the final state");
                (last.b_densities(), json!({ "residual": last.residual, "time": last.time, "dt": dt }))
            }
        };
        art.write_csv(&format!("{prefix}{}", profile_name("steady", x0)), &["x", "n_B"], cell_rows(&n))?;
        runs.push(json!({
            "x0": x0,
            "total": n.iter().sum::<f64>(),
            "diagnostics": diag,
            "edge_burst": analysis::edge_burst(&n, x0),
            "correspondence_error": correspondence(cfg, &p, Some(&n), None),
        }));
        edge.push(vec![(x0 - 1) as f64, n[0]]);
    }
    write_edge(art, &format!("{prefix}steady_edge.csv"), &["distance", "n_B_1"], edge)?;
    let summary = json!({ "method": method, "runs": runs });
    art.write_json(&format!("{prefix}steady_summary.json"), &summary)?;
    Ok(summary)
}

/// Profiles of one estimator across a positive-P pump sweep, at the last record.
pub struct EnsembleProfiles {
    pub n_b: Vec<SweepProfile>,
    pub c_b: Vec<SweepProfile>,
    pub generator: String,
}

fn sigma_gap(a: &Estimate, b: &Estimate) -> f64 {
    (a.mean - b.mean).abs() / (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

pub fn positivep(cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<(Value, EnsembleProfiles)> {
    let base = *cfg.model()?;
    let mut runs = Vec::new();
    let mut edge = Vec::new();
    let mut profiles = EnsembleProfiles { n_b: Vec::new(), c_b: Vec::new(), generator: String::new() };
    for x0 in cfg.pumps()? {
        let p = base.with_x0(x0);
        p.validate()?;
        info!("positive-P x0={x0}, {} trajectories", cfg.sde.n_traj);
        let r = run_ensemble(&p, &cfg.sde)?;
        let mut records = Vec::new();
        for rec in &r.records {
            let n = rec.n_b();
            let c = rec.c_b();
            art.write_csv(
                &format!("{prefix}positivep_x0_{x0:03}_t{}.csv", rec.time),
                &["x", "n_B", "stderr_n", "C_B", "stderr_C"],
                n.iter()
                    .zip(&c)
                    .enumerate()
                    .map(|(i, (a, b))| vec![(i + 1) as f64, a.mean, a.stderr, b.mean, b.stderr]),
            )?;
            let imag_sigma = n
                .iter()
                .chain(&c)
                .map(|e| if e.imag_stderr > 0.0 { e.imag.abs() / e.imag_stderr } else { 0.0 })
                .fold(0.0, f64::max);
            let c_total = rec.c_b_total();
            let sum_rule = (p.gamma2 > 0.0 && p.gamma1 == 0.0).then(|| {
                let expected = p.gamma_g / (2.0 * p.gamma2);
                json!({ "expected": expected, "sigma": (c_total.mean - expected).abs() / c_total.stderr })
            });
            records.push(json!({
                "time": rec.time,
                "trajectories": rec.count,
                "discard_fraction": rec.discard_fraction(),
                "n_b_total": estimate_json(&rec.n_b_total()),
                "c_b_total": estimate_json(&c_total),
                "c_b_sum_rule": sum_rule,
                "max_imag_sigma": imag_sigma,
            }));
        }
        let last = r.records.last().expect("at least one record time");
        let stationarity = (r.records.len() >= 2).then(|| {
            let prev = &r.records[r.records.len() - 2];
            sigma_gap(&prev.n_b_total(), &last.n_b_total()).max(sigma_gap(&prev.c_b_total(), &last.c_b_total()))
        });
        let (n, c) = (last.n_b(), last.c_b());
        edge.push(vec![(x0 - 1) as f64, n[0].mean, n[0].stderr, c[0].mean, c[0].stderr]);
        profiles.n_b.push(SweepProfile {
            x0,
            values: n.iter().map(|e| e.mean).collect(),
            stderr: Some(n.iter().map(|e| e.stderr).collect()),
        });
        profiles.c_b.push(SweepProfile {
            x0,
            values: c.iter().map(|e| e.mean).collect(),
            stderr: Some(c.iter().map(|e| e.stderr).collect()),
        });
        profiles.generator = r.generator.clone();
        runs.push(json!({
            "x0": x0,
            "seed": cfg.sde.base_seed,
            "dt": cfg.sde.dt,
            "trajectories": cfg.sde.n_traj,
            "wall_time": r.wall_time,
            "generator": r.generator,
            "records": records,
            "stationarity_sigma": stationarity,
        }));
    }
    write_edge(
        art,
        &format!("{prefix}positivep_edge.csv"),
        &["distance", "n_B_1", "stderr_n", "C_B_1", "stderr_C"],
        edge,
    )?;
    let summary = json!({ "runs": runs });
    art.write_json(&format!("{prefix}positivep_summary.json"), &summary)?;
    Ok((summary, profiles))
}

pub fn meanfield(cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<(Value, Vec<SweepProfile>)> {
    let base = *cfg.model()?;
    let mut runs = Vec::new();
    let mut edge = Vec::new();
    let mut profiles = Vec::new();
    for x0 in cfg.pumps()? {
        let p = base.with_x0(x0);
        p.validate()?;
        info!("mean field x0={x0}");
        let run = evolve_meanfield(&p, &cfg.meanfield)?;
        let last = run.last();
        let n = last.b_densities();
        art.write_csv(
            &format!("{prefix}{}", profile_name("meanfield", x0)),
            &["x", "n_B_MF", "n_B_MF_sq"],
            n.iter().enumerate().map(|(i, v)| vec![(i + 1) as f64, *v, v * v]),
        )?;
        let sum_sq: f64 = n.iter().map(|v| v * v).sum();
        let expected = (p.gamma1 == 0.0).then(|| p.gamma_g / (2.0 * p.gamma2));
        runs.push(json!({
            "x0": x0,
            "sum_sq": sum_sq,
            "sum_sq_expected": expected,
            "sum_sq_relative_error": expected.map(|e| (sum_sq - e).abs() / e),
            "residual": last.residual,
            "time": last.time,
            "steps": run.steps,
            "rejected_steps": run.rejected_steps,
            "monotone_tail": run.monotone_tail,
        }));
        edge.push(vec![(x0 - 1) as f64, n[0]]);
        profiles.push(SweepProfile { x0, values: n, stderr: None });
    }
    write_edge(art, &format!("{prefix}meanfield_edge.csv"), &["distance", "n_B_MF_1"], edge)?;
    let summary = json!({ "runs": runs });
    art.write_json(&format!("{prefix}meanfield_summary.json"), &summary)?;
    Ok((summary, profiles))
}

/// Bulk and edge exponents of a pump sweep, with per-profile edge-burst flags.
pub fn fit_profiles(runs: &[SweepProfile], rules: &[SumRule], art: &mut Artifacts, prefix: &str) -> CliResult<Value> {
    let report = analysis::scaling_report(runs, rules)?;
    art.write_json(&format!("{prefix}fit_report.json"), &report)?;
    art.write_csv(
        &format!("{prefix}fit_bulk.csv"),
        &["x0", "alpha_b", "stderr"],
        report.bulk_fits.iter().map(|b| vec![b.x0 as f64, b.fit.exponent, b.fit.stderr]),
    )?;
    art.write_csv(
        &format!("{prefix}fit_edge.csv"),
        &["distance", "value_1"],
        report.edge_series.iter().map(|(x0, v)| vec![(x0 - 1) as f64, *v]),
    )?;
    let bursts: Vec<Value> =
        runs.iter().map(|r| json!({ "x0": r.x0, "edge_burst": analysis::edge_burst(&r.values, r.x0) })).collect();
    Ok(json!({
        "alpha_b": report.alpha_b,
        "alpha_e": report.alpha_e,
        "difference": report.difference,
        "edge_stderr": report.edge_fit.stderr,
        "skipped": report.skipped,
        "constraints": report.constraint_checks,
        "profiles": bursts,
    }))
}

pub fn fit_files(
    cfg: &RunConfig,
    files: &[PathBuf],
    column: Option<&str>,
    art: &mut Artifacts,
    prefix: &str,
) -> CliResult<Value> {
    let column = column.or(cfg.fit.column.as_deref());
    let mut inputs: Vec<(PathBuf, usize)> = cfg.fit.inputs.iter().map(|i| (i.path.clone(), i.x0)).collect();
    for f in files {
        let x0 = x0_from_name(f)
            .ok_or_else(|| Failure::Config(format!("{}: no `_x0_<cell>` in the file name", f.display())))?;
        inputs.push((f.clone(), x0));
    }
    if inputs.is_empty() {
        return Err(Failure::Config("fit needs at least one input profile".into()));
    }
    inputs.sort_by_key(|i| i.1);
    let mut runs = Vec::new();
    for (path, x0) in &inputs {
        let col = read_profile_csv(path, column)?;
        runs.push(SweepProfile { x0: *x0, values: col.values, stderr: col.stderr });
    }
    let mut summary = fit_profiles(&runs, &cfg.fit.sum_rules, art, prefix)?;
    summary["inputs"] = json!(inputs.iter().map(|i| i.0.display().to_string()).collect::<Vec<_>>());
    Ok(summary)
}
