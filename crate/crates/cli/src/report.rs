//! `report.json` assembly and artifact bookkeeping.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Format;

pub const REPORT_SCHEMA: &str = "hypolab-report/1";

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub name: String,
    pub format: Format,
    pub bytes: usize,
}

/// Output directory plus the list of files written so far.
pub struct Outputs {
    dir: PathBuf,
    formats: Vec<Format>,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    pub fn new(dir: &Path, formats: &[Format]) -> std::io::Result<Outputs> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), formats: formats.to_vec(), artifacts: Vec::new() })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` when `format` was requested.
    pub fn write(&mut self, name: &str, format: Format, data: impl AsRef<[u8]>) -> std::io::Result<()> {
        if !self.wants(format) {
            return Ok(());
        }
        let data = data.as_ref();
        std::fs::write(self.dir.join(name), data)?;
        self.artifacts.push(Artifact { name: name.to_string(), format, bytes: data.len() });
        Ok(())
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }
}

pub struct Clock {
    started: SystemTime,
    t0: Instant,
}

impl Clock {
    pub fn start() -> Clock {
        Clock { started: SystemTime::now(), t0: Instant::now() }
    }

    pub fn timing(&self) -> Value {
        let unix = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        json!({ "started_unix": unix, "elapsed_ms": self.t0.elapsed().as_secs_f64() * 1e3 })
    }
}

pub struct ReportParts<'a> {
    pub command: &'a str,
    pub config: Option<Value>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub results: Option<Value>,
    pub error: Option<Value>,
    pub artifacts: &'a [Artifact],
    pub timing: Value,
}

pub fn build(parts: ReportParts<'_>) -> Value {
    json!({
        "schema": REPORT_SCHEMA,
        "command": parts.command,
        "status": if parts.error.is_some() { "error" } else { "ok" },
        "versions": {
            "hypolab": env!("CARGO_PKG_VERSION"),
            "report_schema": REPORT_SCHEMA,
        },
        "config": parts.config,
        "config_hash": parts.config_hash,
        "seed": parts.seed,
        "results": parts.results,
        "error": parts.error,
        "artifacts": parts.artifacts,
        "timing": parts.timing,
    })
}

/// The report with the `timing` block removed, for reproducibility checks.
pub fn without_timing(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(obj) = r.as_object_mut() {
        obj.remove("timing");
    }
    r
}
