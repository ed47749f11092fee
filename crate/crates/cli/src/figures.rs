use std::collections::BTreeMap;

use edgeburst::analysis::{SumRule, SweepProfile};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::artifacts::{Artifacts, OutputEntry};
use crate::commands;
use crate::config::{resolve, RunConfig, SteadyMethod};
use crate::error::{CliResult, Failure};

const PRESETS: &str = include_str!("../presets.json");
const PRESET_VERSION: u32 = 1;

pub const FIGURES: [&str; 6] = ["fig1c", "fig1d", "fig2", "fig3", "figS1", "figS2"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub description: String,
    pub config: Value,
    /// Named override sets; each variant runs the recipe once.
    #[serde(default)]
    pub variants: BTreeMap<String, BTreeMap<String, Value>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    version: u32,
    presets: BTreeMap<String, Preset>,
}

pub fn presets() -> BTreeMap<String, Preset> {
    let file: PresetFile = serde_json::from_str(PRESETS).expect("embedded presets parse");
    assert_eq!(file.version, PRESET_VERSION, "embedded presets version");
    file.presets
}

pub fn preset(name: &str) -> CliResult<Preset> {
    presets().remove(name).ok_or_else(|| {
        Failure::Config(format!(
            "unknown preset `{name}`; known: {}",
            presets().into_keys().collect::<Vec<_>>().join(", ")
        ))
    })
}

fn sum_rule(name: &str, power: i32, expected: f64, rel_tol: f64) -> SumRule {
    SumRule { name: name.into(), power, expected, tolerance: rel_tol * expected }
}

fn squared(runs: &[SweepProfile]) -> Vec<SweepProfile> {
    runs.iter()
        .map(|r| SweepProfile { x0: r.x0, values: r.values.iter().map(|v| v * v).collect(), stderr: None })
        .collect()
}

fn recipe(name: &str, cfg: &RunConfig, art: &mut Artifacts, prefix: &str) -> CliResult<Value> {
    let mut out = serde_json::Map::new();
    match name {
        "fig1c" => {
            out.insert("quench".into(), commands::quench(cfg, art, prefix)?);
        }
        "fig1d" => {
            out.insert("relaxation".into(), commands::steady(cfg, art, &format!("{prefix}relaxation_"))?);
            let mut exact = cfg.clone();
            exact.solver.method = SteadyMethod::Lyapunov;
            exact.solver.record_every = None;
            out.insert("steady".into(), commands::steady(&exact, art, prefix)?);
        }
        "fig2" | "figS2" => {
            let model = *cfg.model()?;
            let s = commands::steady(cfg, art, prefix)?;
            let runs = profiles_from_disk(art, prefix, "steady", &cfg.pumps()?)?;
            let rules = [sum_rule("sum n_B", 1, model.gamma_g / model.gamma1, 1e-6)];
            let rules: &[SumRule] = if model.delta_gamma() == 0.0 { &rules } else { &[] };
            out.insert("steady".into(), s);
            out.insert("fit".into(), commands::fit_profiles(&runs, rules, art, prefix)?);
            if name == "fig2" {
                out.insert("spectrum".into(), commands::spectrum(cfg, art, prefix)?);
            }
        }
        "fig3" => {
            let model = *cfg.model()?;
            let target = model.gamma_g / (2.0 * model.gamma2);
            let (pp, ens) = commands::positivep(cfg, art, prefix)?;
            out.insert("positivep".into(), pp);
            out.insert(
                "fit_C_B".into(),
                commands::fit_profiles(&ens.c_b, &[], art, &format!("{prefix}positivep_C_B_"))?,
            );
            out.insert(
                "fit_n_B".into(),
                commands::fit_profiles(&ens.n_b, &[], art, &format!("{prefix}positivep_n_B_"))?,
            );
            let (mf, runs) = commands::meanfield(cfg, art, prefix)?;
            out.insert("meanfield".into(), mf);
            let rules = [sum_rule("sum n_MF^2", 2, target, 0.01)];
            out.insert(
                "fit_n_MF".into(),
                commands::fit_profiles(&runs, &rules, art, &format!("{prefix}meanfield_n_B_"))?,
            );
            out.insert(
                "fit_n_MF_sq".into(),
                commands::fit_profiles(&squared(&runs), &[], art, &format!("{prefix}meanfield_n_B_sq_"))?,
            );
        }
        "figS1" => {
            out.insert("spectrum".into(), commands::spectrum(cfg, art, prefix)?);
        }
        other => return Err(Failure::Config(format!("unknown figure `{other}`; known: {}", FIGURES.join(", ")))),
    }
    Ok(Value::Object(out))
}

/// Reads back the profiles a sweep just wrote, so fits see exactly the
/// published numbers.
fn profiles_from_disk(art: &Artifacts, prefix: &str, kind: &str, pumps: &[usize]) -> CliResult<Vec<SweepProfile>> {
    pumps
        .iter()
        .map(|&x0| {
            let path = art.dir().join(format!("{prefix}{}", crate::artifacts::profile_name(kind, x0)));
            let col = crate::artifacts::read_profile_csv(&path, None)?;
            Ok(SweepProfile { x0, values: col.values, stderr: col.stderr })
        })
        .collect()
}

/// Runs a named figure recipe. Returns the summary and the resolved base
/// configuration.
pub fn run(name: &str, overrides: &[String], art: &mut Artifacts) -> CliResult<(Value, RunConfig)> {
    let preset = preset(name)?;
    let base = resolve(preset.config.clone(), overrides)?;
    let mut out = serde_json::Map::new();
    out.insert("description".into(), json!(preset.description));
    if preset.variants.is_empty() {
        out.insert("recipe".into(), recipe(name, &base, art, "")?);
        return Ok((Value::Object(out), base));
    }
    for (label, set) in &preset.variants {
        let mut all: Vec<String> = set.iter().map(|(k, v)| format!("{k}={v}")).collect();
        all.extend(overrides.iter().cloned());
        let cfg = resolve(preset.config.clone(), &all)?;
        let summary = recipe(name, &cfg, art, &format!("{label}_"))?;
        out.insert(label.clone(), json!({ "overrides": set, "summary": summary }));
    }
    Ok((Value::Object(out), base))
}

/// Gnuplot script plotting every per-pump profile and spectrum the run wrote.
pub fn gnuplot_script(outputs: &[OutputEntry]) -> Option<String> {
    let csv: Vec<&str> = outputs.iter().map(|o| o.path.as_str()).filter(|p| p.ends_with(".csv")).collect();
    let profiles: Vec<&str> = csv.iter().copied().filter(|p| p.contains("_x0_")).collect();
    let spectra: Vec<&str> = csv.iter().copied().filter(|p| p.contains("spectrum_")).collect();
    if profiles.is_empty() && spectra.is_empty() {
        return None;
    }
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead noenhanced\nset terminal pngcairo size 900,600\n",
    );
    if !profiles.is_empty() {
        s.push_str("set output 'profiles.png'\nset logscale y\nset xlabel 'x'\nplot ");
        let items: Vec<String> = profiles.iter().map(|p| format!("'{p}' using 1:2 with linespoints")).collect();
        s.push_str(&items.join(", \\\n     "));
        s.push_str("\nunset logscale y\n");
    }
    for p in spectra {
        let png = p.trim_end_matches(".csv");
        if p.ends_with("spectrum_pbc.csv") {
            s.push_str(&format!(
                "set output '{png}.png'\nset xlabel 'Re'\nset ylabel 'Im'\nplot '{p}' using 2:3 with dots, '{p}' using 4:5 with dots\n"
            ));
        } else {
            s.push_str(&format!(
                "set output '{png}.png'\nset xlabel 'Re'\nset ylabel 'Im'\nplot '{p}' using 1:2 with points\n"
            ));
        }
    }
    Some(s)
}
