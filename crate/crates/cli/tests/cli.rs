use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn edgeburst(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeburst"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env_remove("EDGEBURST_OUT")
        .output()
        .expect("binary runs")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const QUADRATIC: &str =
    r#"{"model": {"t1": 0.8, "t2": 1.0, "gamma1": 0.8, "gamma_g": 0.8, "gamma_l": 0.8, "L": 60, "x0": 50}}"#;

#[test]
fn steady_applies_overrides_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let out = tmp.path().join("run");
    let o = edgeburst(&out, &["steady", "--config", &cfg, "--override", "L=30", "--override", "x0=20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("steady_x0_020.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert_eq!(csv.lines().next(), Some("x,n_B"));
    let m = json_file(&out.join("manifest.json"));
    assert_eq!(m["config"]["model"]["L"], 30);
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert!(listed.contains(&"steady_x0_020.csv"));
    assert!(listed.contains(&"steady_summary.json"));
    let run = &m["diagnostics"]["steady"]["runs"][0];
    assert!(run["correspondence_error"].as_f64().unwrap() < 1e-6);
    assert!((run["total"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn deterministic_subcommands_are_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    for cmd in ["steady", "quench", "spectrum"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        for d in [&a, &b] {
            let o = edgeburst(d, &[cmd, "--config", &cfg, "--override", "L=20", "--override", "x0=15"]);
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let ma = json_file(&a.join("manifest.json"));
        let mb = json_file(&b.join("manifest.json"));
        assert_eq!(ma["outputs"], mb["outputs"], "{cmd}");
    }
}

#[test]
fn spectrum_reports_analytic_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = edgeburst(tmp.path(), &["spectrum", "--preset", "figS1", "--override", "solver.nk=101"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json_file(&tmp.path().join("spectrum_summary.json"));
    assert_eq!(s["gapless"], true);
    assert!((s["delta_gamma_c"].as_f64().unwrap() - 9.0 / 13.0).abs() < 1e-12);
    assert!((s["omega0"].as_f64().unwrap() - 0.75f64.sqrt()).abs() < 1e-12);
    let pbc = fs::read_to_string(tmp.path().join("spectrum_pbc.csv")).unwrap();
    assert_eq!(pbc.lines().next(), Some("k,re_1,im_1,re_2,im_2"));
    assert_eq!(pbc.lines().count(), 102);
    assert!(tmp.path().join("spectrum_obc.csv").exists());
    assert!(tmp.path().join("beta_scan.csv").exists());
}

#[test]
fn config_errors_exit_two_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    for bad in ["gamma3=1", "x0=99", "solver.method=magic"] {
        let o = edgeburst(tmp.path(), &["steady", "--config", &cfg, "--override", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
        let err: Value = serde_json::from_slice(&o.stderr).unwrap();
        assert_eq!(err["error"]["kind"], "config");
    }
    let o = edgeburst(tmp.path(), &["steady"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"t1": 0.5, "t2": 1.0, "gamma1": 0.8, "gamma_g": 1.6, "gamma_l": 0.8, "L": 40, "x0": 20}}"#,
    );
    let o = edgeburst(tmp.path(), &["steady", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "numerical");
}

#[test]
fn verify_passes_then_catches_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let run = tmp.path().join("run");
    assert!(edgeburst(&run, &["quench", "--config", &cfg]).status.success());
    let manifest = run.join("manifest.json").display().to_string();
    let check = tmp.path().join("check");
    let o = edgeburst(&check, &["verify", "--manifest", &manifest]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    fs::write(run.join("quench_x0_050.csv"), "x,P\n1,0\n").unwrap();
    let o = edgeburst(&check, &["verify", "--manifest", &manifest]);
    assert_eq!(o.status.code(), Some(4));
    let report = json_file(&check.join("verify_report.json"));
    let failed: Vec<&Value> = report.as_array().unwrap().iter().filter(|c| c["pass"] == false).collect();
    assert_eq!(failed.len(), 1);
}

#[test]
fn positivep_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"t1": 0.8, "t2": 1.0, "gamma1": 0.0, "gamma2": 0.05, "gamma_g": 1.0, "gamma_l": 1.0, "L": 4, "x0": 3},
            "sde": {"t_end": 2.0, "n_traj": 96, "record_times": [1.0, 2.0]}}"#,
    );
    let one = tmp.path().join("one");
    let many = tmp.path().join("many");
    assert!(edgeburst(&one, &["--threads", "1", "positivep", "--config", &cfg]).status.success());
    assert!(edgeburst(&many, &["positivep", "--config", &cfg]).status.success());
    let a = fs::read(one.join("positivep_x0_003_t2.csv")).unwrap();
    let b = fs::read(many.join("positivep_x0_003_t2.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("x,n_B,stderr_n,C_B,stderr_C"));
    let m = json_file(&one.join("manifest.json"));
    assert!(m["generator"].as_str().unwrap().contains("ChaCha8"));
    assert_eq!(m["seed"], 1);
}

#[test]
fn meanfield_writes_squared_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"t1": 0.8, "t2": 1.0, "gamma1": 0.0, "gamma2": 0.05, "gamma_g": 1.0, "gamma_l": 1.0, "L": 8, "x0": 6}}"#,
    );
    let o = edgeburst(tmp.path(), &["meanfield", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("meanfield_x0_006.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,n_B_MF,n_B_MF_sq"));
    let s = json_file(&tmp.path().join("meanfield_summary.json"));
    assert!(s["runs"][0]["sum_sq_relative_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn fit_consumes_sweep_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = tmp.path().join("sweep");
    let o = edgeburst(&sweep, &["steady", "--preset", "fig2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sweep.join("steady_edge.csv").exists());
    let files: Vec<String> = fs::read_dir(&sweep)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("steady_x0_"))
        .map(|p| p.display().to_string())
        .collect();
    assert_eq!(files.len(), 9);
    let fit = tmp.path().join("fit");
    let mut args = vec!["fit"];
    args.extend(files.iter().map(String::as_str));
    let o = edgeburst(&fit, &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_file(&fit.join("fit_report.json"));
    assert!(r["alpha_b"].as_f64().unwrap() > 1.0);
    assert_eq!(r["edge_series"].as_array().unwrap().len(), 9);
    let bulk = fs::read_to_string(fit.join("fit_bulk.csv")).unwrap();
    assert_eq!(bulk.lines().next(), Some("x0,alpha_b,stderr"));
}

#[test]
fn figure_runs_preset_and_plot_script() {
    let tmp = tempfile::tempdir().unwrap();
    let o = edgeburst(tmp.path(), &["--plot", "figure", "fig1c", "--override", "solver.record_every=10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("quench_x0_050.csv").exists());
    assert!(tmp.path().join("quench_history_050.csv").exists());
    let script = fs::read_to_string(tmp.path().join("plot.gp")).unwrap();
    assert!(script.contains("quench_x0_050.csv"));
    let m = json_file(&tmp.path().join("manifest.json"));
    assert_eq!(m["preset"], "fig1c");
    assert_eq!(m["subcommand"], "figure");
}

#[test]
fn output_directory_defaults_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), QUADRATIC);
    let target = tmp.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_edgeburst"))
        .args(["spectrum", "--config", &cfg, "--override", "solver.nk=11"])
        .env("EDGEBURST_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("manifest.json").exists());
}
