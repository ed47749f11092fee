use std::path::{Path, PathBuf};

use edgeburst::analysis::SumRule;
use edgeburst::meanfield::MeanFieldOptions;
use edgeburst::positivep::SdeConfig;
use edgeburst::ModelParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SteadyMethod {
    /// Schur-based Lyapunov solve.
    #[default]
    Lyapunov,
    /// Eigendecomposition Lyapunov solve (small, well-conditioned chains).
    Eigen,
    /// Frequency integral of the resolvent, linear in the chain length.
    Integral,
    /// Long-time integration of the correlator equation.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Vacuum,
    /// Each A site independently occupied with probability 1/2.
    RandomA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SteadyMethod,
    pub t_max: f64,
    /// Time step; `None` picks the route's default.
    pub dt: Option<f64>,
    /// Quench runs must end with norm below this.
    pub norm_tol: f64,
    pub record_every: Option<f64>,
    pub initial: InitialState,
    pub seed: u64,
    /// Momentum grid size for Bloch spectra.
    pub nk: usize,
    pub obc_spectrum: bool,
    /// Frequency samples for the root-modulus scan; 0 disables it.
    pub beta_scan: usize,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Cross-check the loss/density correspondence when it applies.
    pub correspondence: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SteadyMethod::default(),
            t_max: 200.0,
            dt: None,
            norm_tol: 1e-6,
            record_every: None,
            initial: InitialState::default(),
            seed: 1,
            nk: 2001,
            obc_spectrum: false,
            beta_scan: 0,
            rel_tol: 1e-8,
            max_intervals: 200_000,
            correspondence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitInput {
    pub path: PathBuf,
    pub x0: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub inputs: Vec<FitInput>,
    /// Value column; the second column when absent.
    pub column: Option<String>,
    pub sum_rules: Vec<SumRule>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Pump cells; empty means the single `model.x0`.
    pub x0: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelParams>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default)]
    pub meanfield: MeanFieldOptions,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn model(&self) -> CliResult<&ModelParams> {
        self.model.as_ref().ok_or_else(|| Failure::Config("configuration has no `model` section".into()))
    }

    pub fn pumps(&self) -> CliResult<Vec<usize>> {
        let m = self.model()?;
        Ok(if self.sweep.x0.is_empty() { vec![m.x0] } else { self.sweep.x0.clone() })
    }
}

pub fn load_document(path: &Path) -> CliResult<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Recursively overlays `top` onto `base`; non-object values replace.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `key=value`. Dotted keys address sections; a bare key addresses
/// `model`. The value is parsed as JSON, else taken as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override `{assignment}` is not key=value")))?;
    let mut path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(Failure::Config(format!("override key `{key}` is malformed")));
    }
    if path.len() == 1 {
        path.insert(0, "model");
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    for seg in &path[..path.len() - 1] {
        if !node.is_object() {
            return Err(Failure::Config(format!("override `{key}` crosses a non-object value")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(path[path.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(Failure::Config(format!("override `{key}` crosses a non-object value"))),
    }
}

pub fn resolve(mut doc: Value, overrides: &[String]) -> CliResult<RunConfig> {
    if doc.is_null() {
        doc = Value::Object(Map::new());
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(m) = &cfg.model {
        m.validate()?;
    }
    cfg.sde.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> Value {
        json!({"model": {"t1": 0.8, "t2": 1.0, "gamma1": 0.8, "gamma_g": 0.8, "gamma_l": 0.8, "L": 60, "x0": 50}})
    }

    #[test]
    fn bare_key_targets_model() {
        let cfg = resolve(base(), &["L=30".into(), "x0=20".into()]).unwrap();
        assert_eq!(cfg.model().unwrap().cells, 30);
        assert_eq!(cfg.model().unwrap().x0, 20);
    }

    #[test]
    fn dotted_keys_reach_sections() {
        let cfg =
            resolve(base(), &["sde.n_traj=64".into(), "sweep.x0=[10,20]".into(), "solver.method=integral".into()])
                .unwrap();
        assert_eq!(cfg.sde.n_traj, 64);
        assert_eq!(cfg.sweep.x0, vec![10, 20]);
        assert_eq!(cfg.solver.method, SteadyMethod::Integral);
        assert_eq!(cfg.sde.dt, SdeConfig::default().dt);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        for o in ["gamma3=1", "solver.mehtod=time", "x0"] {
            let e = resolve(base(), &[o.into()]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{o}");
        }
    }

    #[test]
    fn merge_overlays_nested_sections() {
        let mut doc = base();
        merge(&mut doc, json!({"model": {"L": 30, "x0": 20}, "sde": {"n_traj": 8}}));
        let cfg = resolve(doc, &[]).unwrap();
        assert_eq!(cfg.model().unwrap().cells, 30);
        assert_eq!(cfg.model().unwrap().t1, 0.8);
        assert_eq!(cfg.sde.n_traj, 8);
    }

    #[test]
    fn invalid_model_is_a_config_error() {
        let e = resolve(base(), &["x0=99".into()]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_model_section_is_reported() {
        let cfg = resolve(Value::Null, &[]).unwrap();
        assert_eq!(cfg.model().unwrap_err().exit_code(), 2);
    }
}
