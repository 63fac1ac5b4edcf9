use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fluor_cli::{execute_runs, load_runs, presets};

/// Runs fluorescence-spectrum experiments from TOML configs and writes
/// plot-ready CSV datasets with JSON metadata sidecars.
#[derive(Parser)]
#[command(name = "fluor", version, about)]
struct Cli {
    /// Path to a TOML run description (single run or a [[run]] array).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Name of a built-in run description; see --list-presets.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Output directory, overriding the config's `output.directory`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for frequency sweeps; defaults to all cores. Results
    /// are identical for any value.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,

    /// Replace dataset files that already exist.
    #[arg(long)]
    force_overwrite: bool,

    /// Print the built-in preset names and exit.
    #[arg(long)]
    list_presets: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.list_presets {
        for name in presets::names() {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }

    let runs = match load_runs(cli.config.as_deref(), cli.preset.as_deref()) {
        Ok(runs) => runs,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot build the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    };

    let report =
        pool.install(|| execute_runs(&runs, cli.out.as_deref(), cli.force_overwrite));
    for file in &report.files {
        println!("wrote {}", file.display());
    }
    if report.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: {} point(s) failed:", report.failures.len());
        for failure in &report.failures {
            eprintln!("  {failure}");
        }
        ExitCode::FAILURE
    }
}
