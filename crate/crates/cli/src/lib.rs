//! Command-line front end: config loading, subcommand dispatch and `report.json`.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::{ConfigError, Format};
use report::{Clock, Outputs, ReportParts};

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] hypolab_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CmdError {
    /// Process exit code: 1 i/o, 2 bad input, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Io(_) => 1,
            CmdError::Config(_) => 2,
            CmdError::Core(e) if e.is_numerical() => 3,
            CmdError::Core(_) => 2,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CmdError::Config(e) => json!({ "kind": "config", "code": "ConfigError", "path": e.path(), "message": e.to_string() }),
            CmdError::Core(e) => json!({ "kind": "core", "code": e.code(), "message": e.to_string() }),
            CmdError::Io(e) => json!({ "kind": "io", "code": "Io", "message": e.to_string() }),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hypolab", version, about = "Numerical laboratory for degenerate divergence-form operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted override such as `run.draws=5`; repeatable.
    #[arg(long = "set", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output formats; overrides `output.formats`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve the Dirichlet problem and check the maximum principle.
    Solve,
    /// Green kernel diagnostics.
    Green,
    /// Harnack constants from the Poisson kernel.
    Harnack,
    /// Strong maximum principle on random harmonic data.
    Smp,
    /// Hopf barrier certificates at boundary nodes.
    Hopf,
    /// Reachable set and control paths.
    Paths,
    /// Convergence under grid refinement.
    Refine,
    /// List the operator gallery.
    GalleryList,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Green => "green",
            Command::Harnack => "harnack",
            Command::Smp => "smp",
            Command::Hopf => "hopf",
            Command::Paths => "paths",
            Command::Refine => "refine",
            Command::GalleryList => "gallery-list",
        }
    }
}

/// Runs one invocation and returns the process exit code. `report.json` is
/// written whenever the output directory can be created.
pub fn run(cli: Cli) -> i32 {
    let clock = Clock::start();
    if let Some(n) = cli.threads {
        // Fails only when the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cmd = cli.command;
    let loaded = load(&cli);
    let dir = cli.out.clone().unwrap_or_else(|| {
        PathBuf::from(loaded.as_ref().ok().and_then(|c| c.as_ref()).map(|c| c.output.dir.clone()).unwrap_or_else(|| "out".into()))
    });
    let formats = match (&loaded, cli.format.is_empty()) {
        (Ok(Some(c)), true) => c.output.formats.clone(),
        (_, false) => cli.format.clone(),
        _ => vec![Format::Json],
    };
    let mut out = match Outputs::new(&dir, &formats) {
        Ok(o) => o,
        Err(e) => return fail(&CmdError::Io(e)),
    };

    let mut config = None;
    let mut config_hash = None;
    let mut seed = None;
    let outcome = loaded.and_then(|cfg| match cfg {
        None => Ok(commands::gallery_list()),
        Some(cfg) => {
            config = Some(cfg.echo());
            config_hash = Some(cfg.hash());
            seed = Some(cfg.run.seed);
            let setup = commands::Setup::new(cfg)?;
            match cmd {
                Command::Solve => commands::solve(&setup, &mut out),
                Command::Green => commands::green(&setup, &mut out),
                Command::Harnack => commands::harnack(&setup, &mut out),
                Command::Smp => commands::smp(&setup, &mut out),
                Command::Hopf => commands::hopf(&setup, &mut out),
                Command::Paths => commands::paths(&setup, &mut out),
                Command::Refine => commands::refine(&setup, &mut out),
                Command::GalleryList => Ok(commands::gallery_list()),
            }
        }
    });
    let (results, error) = match &outcome {
        Ok(v) => (Some(v.clone()), None),
        Err(e) => (None, Some(e.to_json())),
    };
    let report = report::build(ReportParts {
        command: cmd.name(),
        config,
        config_hash,
        seed,
        results,
        error,
        artifacts: out.artifacts(),
        timing: clock.timing(),
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = std::fs::write(out.dir().join("report.json"), text) {
        return fail(&CmdError::Io(e));
    }
    match outcome {
        Ok(_) => 0,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CmdError) -> i32 {
    eprintln!("{}", json!({ "error": e.to_json() }));
    e.exit_code()
}

/// `None` for commands that need no config.
fn load(cli: &Cli) -> Result<Option<config::ExperimentConfig>, CmdError> {
    if matches!(cli.command, Command::GalleryList) && cli.config.is_none() {
        return Ok(None);
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid { path: "--config".into(), message: "a config file is required".into() })?;
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if !cli.format.is_empty() {
        let list: Vec<String> = cli.format.iter().map(|f| format!("\"{}\"", serde_json::to_value(f).unwrap().as_str().unwrap())).collect();
        overrides.push(format!("output.formats=[{}]", list.join(",")));
    }
    Ok(Some(config::load(path, &overrides)?))
}
