//! Experiment configuration: TOML or JSON, strict schema, dotted overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use hypolab_core::operator::Params;

pub const SCHEMA: &str = "hypolab/1";
pub const DEFAULT_SEED: u64 = 0x5EED;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { path: path.to_string(), message: message.into() }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub operator: OperatorConfig,
    pub grid: GridConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    /// Gallery name; exclusive with `a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gallery: Option<String>,
    #[serde(default)]
    pub params: Params,
    /// Coefficient matrix as expression strings in `x1..xN`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    #[serde(default)]
    pub shift_eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: Vec<[f64; 2]>,
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_cap: Option<usize>,
}

impl GridConfig {
    pub fn resolution_vec(&self) -> Vec<usize> {
        match &self.resolution {
            Resolution::Uniform(n) => vec![*n; self.bounds.len()],
            Resolution::PerAxis(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Lens { x0: Vec<f64>, h0: Vec<f64>, lens_eps: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl DomainConfig {
    pub fn center(&self) -> Vec<f64> {
        match self {
            DomainConfig::Lens { x0, .. } => x0.clone(),
            DomainConfig::Ball { center, .. } => center.clone(),
            DomainConfig::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            DomainConfig::Lens { x0, .. } => x0.len(),
            DomainConfig::Ball { center, .. } => center.len(),
            DomainConfig::Box { lo, .. } => lo.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    pub y: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Randomized draws per suite.
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Right-hand side `f` of `L_ε u = −f`, as an expression.
    #[serde(default = "default_f")]
    pub f: String,
    /// Boundary data expression.
    #[serde(default = "default_phi")]
    pub phi: String,
    #[serde(default)]
    pub n_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_center: Option<Vec<f64>>,
    #[serde(default = "default_k_radius")]
    pub k_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_bumps")]
    pub bumps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default)]
    pub probes: Vec<Probe>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_draws() -> usize {
    20
}
fn default_f() -> String {
    "1".into()
}
fn default_phi() -> String {
    "0".into()
}
fn default_k_radius() -> f64 {
    0.5
}
fn default_m() -> usize {
    1
}
fn default_delta() -> f64 {
    0.4
}
fn default_samples() -> usize {
    50
}
fn default_bumps() -> usize {
    5
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("run defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
    Pgm,
    Mm,
    Bin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> String {
    "out".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Svg]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir(), formats: default_formats() }
    }
}

/// Parses a TOML or JSON document (by extension, falling back on content).
pub fn parse_document(text: &str, path: &Path) -> Result<Value, ConfigError> {
    let json_ext = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json_ext || text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Applies `key.sub=value`; the value is read as TOML when it parses, else as
/// a bare string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.to_string()));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|t| t.get("v").cloned())
        .map(|v| serde_json::to_value(v).expect("toml values map to json"))
        .unwrap_or_else(|| Value::String(raw.trim().to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| ConfigError::invalid(key, "override path runs through a non-table value"))?;
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| ConfigError::invalid(key, "override path runs through a non-table value"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
    let mut doc = parse_document(&text, path)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    from_value(doc)
}

pub fn from_value(doc: Value) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA {
            return Err(ConfigError::invalid("schema", format!("expected \"{SCHEMA}\", got \"{}\"", self.schema)));
        }
        let op = &self.operator;
        match (&op.gallery, &op.a) {
            (Some(_), Some(_)) => return Err(ConfigError::invalid("operator", "give either `gallery` or `a`, not both")),
            (None, None) => return Err(ConfigError::invalid("operator", "one of `gallery` or `a` is required")),
            (Some(_), None) if op.v.is_some() || op.c.is_some() => {
                return Err(ConfigError::invalid("operator", "`v` and `c` apply to expression operators only"))
            }
            (None, Some(_)) if !op.params.is_empty() => {
                return Err(ConfigError::invalid("operator.params", "params apply to gallery operators only"))
            }
            _ => {}
        }
        if !(op.shift_eps >= 0.0) || !op.shift_eps.is_finite() {
            return Err(ConfigError::invalid("operator.shift_eps", "must be a finite number ≥ 0"));
        }
        let dim = self.grid.bounds.len();
        if dim == 0 {
            return Err(ConfigError::invalid("grid.bounds", "at least one axis is required"));
        }
        let res = self.grid.resolution_vec();
        if res.len() != dim {
            return Err(ConfigError::invalid("grid.resolution", format!("{} entries for {dim} axes", res.len())));
        }
        if self.domain.dim() != dim {
            return Err(ConfigError::invalid("domain", format!("domain is {}-dimensional, grid is {dim}-dimensional", self.domain.dim())));
        }
        match &self.domain {
            DomainConfig::Lens { h0, lens_eps, .. } => {
                if h0.len() != dim {
                    return Err(ConfigError::invalid("domain.h0", "dimension mismatch"));
                }
                if !(*lens_eps > 0.0) {
                    return Err(ConfigError::invalid("domain.lens_eps", "must be positive"));
                }
            }
            DomainConfig::Ball { radius, .. } if !(*radius > 0.0) => {
                return Err(ConfigError::invalid("domain.radius", "must be positive"));
            }
            DomainConfig::Box { lo, hi } if hi.len() != dim || lo.iter().zip(hi).any(|(a, b)| !(a < b)) => {
                return Err(ConfigError::invalid("domain", "box needs lo < hi on every axis"));
            }
            _ => {}
        }
        let run = &self.run;
        for (name, p) in [("run.point", &run.point), ("run.k_center", &run.k_center), ("run.y0", &run.y0), ("run.start", &run.start)] {
            if p.as_ref().is_some_and(|p| p.len() != dim) {
                return Err(ConfigError::invalid(name, format!("expected {dim} coordinates")));
            }
        }
        for (k, p) in run.probes.iter().enumerate() {
            if p.y.len() != dim || p.nu.len() != dim {
                return Err(ConfigError::invalid(&format!("run.probes[{k}]"), format!("expected {dim} coordinates")));
            }
        }
        if run.n_list.iter().any(|n| !(*n >= 1.0)) {
            return Err(ConfigError::invalid("run.n_list", "entries must be ≥ 1"));
        }
        if run.m > 4 {
            return Err(ConfigError::invalid("run.m", "derivative order must be ≤ 4"));
        }
        if !(run.k_radius > 0.0) || !(run.delta > 0.0) {
            return Err(ConfigError::invalid("run", "k_radius and delta must be positive"));
        }
        if run.resolutions.iter().any(|&r| r < 3) {
            return Err(ConfigError::invalid("run.resolutions", "each resolution needs at least 3 nodes"));
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::invalid("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    /// Canonical JSON echo of the resolved configuration.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.echo()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
