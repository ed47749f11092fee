use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliResult, Failure};

pub const MANIFEST_NAME: &str = "manifest.json";

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Cell-index columns, written as integers.
const INDEX_COLUMNS: [&str; 3] = ["x", "x0", "distance"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub preset: Option<String>,
    /// Fully resolved configuration.
    pub config: Value,
    pub seed: u64,
    pub generator: Option<String>,
    pub code_version: String,
    pub threads: usize,
    pub wall_time: f64,
    pub outputs: Vec<OutputEntry>,
    pub diagnostics: Map<String, Value>,
}

/// Output directory that records a digest of every file it writes.
pub struct Artifacts {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn outputs(&self) -> &[OutputEntry] {
        &self.outputs
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let index: Vec<bool> = header.iter().map(|h| INDEX_COLUMNS.contains(h)).collect();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            w.write_record(row.iter().zip(&index).map(|(v, &i)| {
                debug_assert!(!i || v.fract() == 0.0);
                if i {
                    format!("{v:.0}")
                } else {
                    fmt_f64(*v)
                }
            }))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Io(anyhow::anyhow!("{e}")))?;
        self.record(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Io(e.into()))?;
        bytes.push(b'\n');
        self.record(name, &bytes)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        self.record(name, text.as_bytes())
    }

    /// Writes the manifest, which is not itself listed as an output.
    pub fn finish(self, mut manifest: RunManifest) -> CliResult<PathBuf> {
        manifest.outputs = self.outputs;
        let path = self.dir.join(MANIFEST_NAME);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::Io(e.into()))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Problems found when re-hashing the outputs a manifest lists.
pub fn check_manifest(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    for o in &m.outputs {
        match fs::read(dir.join(&o.path)) {
            Ok(bytes) => {
                let digest = hex::encode(Sha256::digest(&bytes));
                if digest != o.sha256 {
                    problems.push(format!("{}: digest mismatch", o.path));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", o.path)),
        }
    }
    Ok(problems)
}

/// A numeric CSV column with its standard-error companion when present.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileColumn {
    pub name: String,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

/// Reads the value column `column` (default: the second column). The
/// standard error is the next column if its name starts with `stderr`.
pub fn read_profile_csv(path: &Path, column: Option<&str>) -> CliResult<ProfileColumn> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let idx = match column {
        Some(c) => header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Failure::Config(format!("{}: no column `{c}` in {header:?}", path.display())))?,
        None if header.len() >= 2 => 1,
        None => return Err(Failure::Config(format!("{}: needs at least two columns", path.display()))),
    };
    let err_idx = header.get(idx + 1).filter(|h| h.starts_with("stderr")).map(|_| idx + 1);
    let mut values = Vec::new();
    let mut errs = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> CliResult<f64> {
            let s = rec.get(i).unwrap_or("");
            s.trim().parse().map_err(|_| Failure::Config(format!("{}: `{s}` is not a number", path.display())))
        };
        values.push(parse(idx)?);
        if let Some(j) = err_idx {
            errs.push(parse(j)?);
        }
    }
    Ok(ProfileColumn { name: header[idx].clone(), values, stderr: err_idx.map(|_| errs) })
}

/// Pump cell encoded as `_x0_<digits>` in a file name.
pub fn x0_from_name(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let start = stem.rfind("x0_")? + 3;
    let digits: String = stem[start..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

pub fn profile_name(kind: &str, x0: usize) -> String {
    format!("{kind}_x0_{x0:03}.csv")
}
