use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;
use crate::reports::Report;
use crate::RunOutcome;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub regida: &'static str,
    pub regida_core: &'static str,
}

/// Wall-clock information; the only part of a run that is not reproducible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

/// Record of one run, written as `manifest.json` next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: Option<String>,
    pub seed: Option<u64>,
    pub tables: Option<Vec<String>>,
    pub provider: Option<String>,
    pub definitions: Vec<String>,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub skipped: Vec<String>,
    pub timing: Option<Timing>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: None,
            seed: None,
            tables: None,
            provider: None,
            definitions: Vec::new(),
            versions: Versions {
                regida: env!("CARGO_PKG_VERSION"),
                regida_core: regida_core::VERSION,
            },
            outputs: Vec::new(),
            skipped: Vec::new(),
            timing: None,
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a hidden temporary file in the same directory, then
/// renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(output_err(&tmp))?;
    fs::rename(&tmp, path).map_err(output_err(path))
}

pub fn write_reports(
    dir: &Path,
    reports: Vec<Report>,
    manifest: Manifest,
    started: Instant,
) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(dir).map_err(output_err(dir))?;
    let mut names = Vec::with_capacity(reports.len());
    for r in reports {
        write_atomic(&dir.join(&r.name), &r.bytes)?;
        names.push(r.name);
    }
    write_manifest(dir, names, manifest, started)
}

/// Completes the manifest with the output list and timing and writes it.
pub fn write_manifest(
    dir: &Path,
    outputs: Vec<String>,
    mut manifest: Manifest,
    started: Instant,
) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(dir).map_err(output_err(dir))?;
    manifest.outputs = outputs.clone();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
        .saturating_sub(started.elapsed().as_millis());
    manifest.timing = Some(Timing {
        started_unix_ms,
        elapsed_ms: started.elapsed().as_millis(),
    });
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &json)?;
    let mut files = outputs;
    files.push(MANIFEST.to_string());
    Ok(RunOutcome {
        out_dir: dir.to_path_buf(),
        files,
    })
}
