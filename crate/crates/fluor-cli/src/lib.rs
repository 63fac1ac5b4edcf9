//! Config-driven runner: parses a TOML run description (or a named built-in
//! preset), executes each run, and writes plot-ready CSV datasets with JSON
//! sidecars. Identical configs produce byte-identical CSV payloads
//! regardless of the worker count.

pub mod config;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};

use config::RunConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Validation(String),
    #[error(transparent)]
    Model(#[from] fluor::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

/// Loads runs from an explicit file or a named preset.
pub fn load_runs(
    config_path: Option<&Path>,
    preset: Option<&str>,
) -> Result<Vec<RunConfig>, CliError> {
    let text = match (config_path, preset) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => presets::lookup(name)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown preset `{name}`; available: {}",
                    presets::names().join(", ")
                ))
            })?
            .to_string(),
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("pass either --config or --preset, not both".into()))
        }
        (None, None) => {
            return Err(CliError::Usage("one of --config or --preset is required".into()))
        }
    };
    config::parse_runs(&text)
}

/// Emitted files plus the failures that did not stop the other runs or sweep
/// points. A nonempty failure list means a nonzero exit.
#[derive(Debug, Default)]
pub struct ExecutionReport {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

/// Executes every run; a failing sweep point or run is recorded and the rest
/// still execute, so partial datasets survive a bad point.
pub fn execute_runs(
    runs: &[RunConfig],
    out_override: Option<&Path>,
    overwrite: bool,
) -> ExecutionReport {
    let mut report = ExecutionReport::default();
    for run in runs {
        let out_dir = out_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| run.output.directory.clone());
        let run_label = run.name.as_deref().unwrap_or_else(|| run.experiment.name());
        match runner::execute(run, &out_dir, overwrite) {
            Ok(outcome) => {
                report.files.extend(outcome.files);
                report.failures.extend(
                    outcome
                        .failures
                        .into_iter()
                        .map(|f| format!("{run_label}: {}: {}", f.label, f.message)),
                );
            }
            Err(e) => report.failures.push(format!("{run_label}: {e}")),
        }
    }
    report
}
