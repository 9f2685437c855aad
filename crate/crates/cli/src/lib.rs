//! Experiment driver: validates an [`ExperimentConfig`], runs the matching
//! estimators on a worker pool and writes
//!
//! * `<out>`: the result table as CSV, preceded by `#` comment lines that
//!   record every setting the numbers depend on;
//! * `<out>.meta.json`: the full configuration, library version, wall time
//!   and any instability flags;
//! * `<out>.fit.json`: the least-squares fit, when one was requested.
//!
//! Each file is written to a temporary file in the target directory and
//! renamed into place, so an interrupted run leaves no partial output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod grid;
pub mod table;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lpsections::par::with_workers;
use lpsections::FitResult;
use serde::Serialize;

pub use config::{Experiment, ExperimentConfig, FitSpec};
pub use error::{CliError, CliResult};
pub use table::{fit_exponent, Cell, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub fit_path: Option<PathBuf>,
    pub rows: usize,
    pub fit: Option<FitResult>,
    pub instability: Vec<String>,
    pub wall_seconds: f64,
}

impl RunSummary {
    /// Exit status: 3 when `strict` and an instability flag was raised.
    pub fn exit_code(&self, strict: bool) -> i32 {
        if strict && !self.instability.is_empty() {
            3
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    columns: &'a [&'static str],
    rows: usize,
    wall_seconds: f64,
    instability: &'a [String],
    fit: Option<&'a FitResult>,
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// The CSV bytes for a finished table.
pub fn render_csv(config: &ExperimentConfig, table: &Table) -> CliResult<Vec<u8>> {
    let mut comments = vec![format!("lpsections {VERSION}")];
    comments.extend(config.describe());
    let mut buf = Vec::new();
    table.write_csv(&mut buf, &comments)?;
    Ok(buf)
}

/// Validates `config`, runs the experiment and writes its files.
pub fn run(config: &ExperimentConfig) -> CliResult<RunSummary> {
    config.validate()?;
    let start = Instant::now();
    let outcome = with_workers(config.workers_or_default(), || experiments::build(config))?;
    let fit = match &config.fit {
        Some(spec) => Some(fit_exponent(&outcome.table, &spec.x, &spec.y)?),
        None => None,
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    let csv = render_csv(config, &outcome.table)?;

    let meta_path = sidecar(&config.out, ".meta.json");
    let fit_path = fit.as_ref().map(|_| sidecar(&config.out, ".fit.json"));
    let meta = Meta {
        tool: "lpsections",
        version: VERSION,
        config,
        columns: &outcome.table.header,
        rows: outcome.table.rows.len(),
        wall_seconds,
        instability: &outcome.instability,
        fit: fit.as_ref(),
    };
    if let (Some(path), Some(f)) = (&fit_path, &fit) {
        write_atomic(path, &serde_json::to_vec_pretty(f)?)?;
    }
    write_atomic(&meta_path, &serde_json::to_vec_pretty(&meta)?)?;
    write_atomic(&config.out, &csv)?;
    Ok(RunSummary {
        csv_path: config.out.clone(),
        meta_path,
        fit_path,
        rows: outcome.table.rows.len(),
        fit,
        instability: outcome.instability,
        wall_seconds,
    })
}
