//! Executes one validated [`RunConfig`] and emits its dataset files. Every
//! CSV gets a JSON sidecar embedding the fully resolved config, so a dataset
//! is reproducible from its own metadata.

use std::path::{Path, PathBuf};

use fluor::dataset::{self, Table};
use fluor::dicke::{closed_form_omega0, critical_lambda_a, lowest_mode, CollectiveFrequencies};
use fluor::dressed::energy_levels_vs_coupling;
use fluor::fock::{initial_state, initial_state_with, StateVector};
use fluor::hamiltonian::{build, Family, ModelSpec};
use fluor::motion::{
    ehrenfest_evolve, fluorescence_channels, nuclear_density, perturbative_spectrum,
    EhrenfestConfig, ObservationTime, DEFAULT_SPECTRUM_BLOCK,
};
use fluor::propagator::{propagate, Observable};
use fluor::spectra::{first_crossing, scan_spectrum, time_resolved_map};
use serde::Serialize;

use crate::config::{Experiment, RunConfig};
use crate::CliError;

/// Sidecar payload: the resolved run plus any per-point overrides applied to
/// the model (launch momentum, start position, array size).
#[derive(Serialize)]
struct ResolvedConfig<'a> {
    #[serde(flatten)]
    run: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolved_model: Option<&'a ModelSpec>,
}

fn emit(
    out_dir: &Path,
    run: &RunConfig,
    kind: &str,
    table: &Table,
    resolved_model: Option<&ModelSpec>,
    overwrite: bool,
) -> Result<PathBuf, CliError> {
    let path = out_dir.join(format!("{}.csv", run.stem(kind)));
    let config = ResolvedConfig { run, resolved_model };
    dataset::write_table(&path, table, &config, overwrite)?;
    Ok(path)
}

/// One failed point of a sweep; the remaining points still run.
#[derive(Debug)]
pub struct PointFailure {
    pub label: String,
    pub message: String,
}

/// Emitted files plus any per-point failures (partial results are kept).
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<PointFailure>,
}

pub fn execute(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Io(format!("cannot create output directory {}: {e}", out_dir.display()))
    })?;
    match run.experiment {
        Experiment::Spectrum => spectrum(run, out_dir, overwrite),
        Experiment::Timemap => timemap(run, out_dir, overwrite),
        Experiment::Levels => levels(run, out_dir, overwrite),
        Experiment::DickeCritical => dicke_critical(run, out_dir, overwrite),
        Experiment::ArrayScaling => array_scaling(run, out_dir, overwrite),
        Experiment::Motion => motion(run, out_dir, overwrite),
        Experiment::Ehrenfest => ehrenfest(run, out_dir, overwrite),
        Experiment::AeaCompare => aea_compare(run, out_dir, overwrite),
    }
}

fn spectrum(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let omega = run.grids.omega_b.unwrap().values();
    let time = run.grids.time.unwrap();
    let scan = scan_spectrum(&run.model, &omega, time.final_time(), &run.numerics)?;
    let table = dataset::spectrum_table(&scan.times, &scan.omega, &scan.p);
    let path = emit(out_dir, run, "spectrum", &table, None, overwrite)?;
    Ok(RunOutcome { files: vec![path], failures: vec![] })
}

fn timemap(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let omega = run.grids.omega_b.unwrap().values();
    let times = run.grids.time.unwrap().values();
    let map = time_resolved_map(&run.model, &omega, &times, &run.numerics)?;
    let table = dataset::spectrum_table(&map.times, &map.omega, &map.p);
    let path = emit(out_dir, run, "timemap", &table, None, overwrite)?;
    Ok(RunOutcome { files: vec![path], failures: vec![] })
}

fn levels(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let g_values = run.grids.g_a.unwrap().values();
    let curves = energy_levels_vs_coupling(&run.model, &g_values)?;
    let mut table = Table::new(&["g_a", "level", "energy"]);
    for (i, &g) in curves.g_values.iter().enumerate() {
        for level in 0..curves.energies.nrows() {
            table.push(vec![g, level as f64, curves.energies[[level, i]]]);
        }
    }
    let path = emit(out_dir, run, "levels", &table, None, overwrite)?;
    Ok(RunOutcome { files: vec![path], failures: vec![] })
}

/// Critical pump coupling versus probe coupling, for the configured
/// frequencies and for their resonant reference (`omega_a = omega_s`), plus
/// the closed-form soft-mode cross-check archived as a deviation column.
fn dicke_critical(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let model = &run.model;
    let detuned = CollectiveFrequencies::new(
        model.omega_s.unwrap(),
        model.omega_a.unwrap(),
        model.omega_b.unwrap(),
    )?;
    let resonant =
        CollectiveFrequencies::new(detuned.omega_s, detuned.omega_s, detuned.omega_b)?;
    let mut table = Table::new(&["lambda_b",
        "lambda_a_resonant",
        "lambda_a_detuned",
        "omega0_closed_form_deviation",]);
    let mut failures = Vec::new();
    for lambda_b in run.grids.lambda_b.unwrap().values() {
        let resonant_critical = critical_lambda_a(&resonant, lambda_b);
        let detuned_critical = critical_lambda_a(&detuned, lambda_b);
        let (Some(la_res), Some(la_det)) = (resonant_critical, detuned_critical) else {
            failures.push(PointFailure {
                label: format!("lambda_b = {lambda_b}"),
                message: "probe coupling alone destabilizes the normal phase".into(),
            });
            continue;
        };
        let soft = lowest_mode(&detuned, la_det, lambda_b)?;
        let closed = closed_form_omega0(la_det, lambda_b);
        table.push(vec![lambda_b, la_res, la_det, closed.value - soft.omega0]);
    }
    let mut files = Vec::new();
    if !table.rows.is_empty() {
        files.push(emit(out_dir, run, "critical", &table, None, overwrite)?);
    }
    Ok(RunOutcome { files, failures })
}

/// Rise time (first crossing of half the series' own maximum, at the
/// window's strongest frequency) and mean probe occupation at the final
/// time, per window and per array size.
fn window_metrics(
    spec: &ModelSpec,
    window: &[f64],
    times: &[f64],
    cfg: &fluor::propagator::KrylovConfig,
) -> Result<(f64, f64), CliError> {
    let map = time_resolved_map(spec, window, times, cfg)?;
    let last = times.len() - 1;
    let strongest = (0..window.len())
        .max_by(|&a, &b| map.p[[last, a]].total_cmp(&map.p[[last, b]]))
        .expect("window grid is nonempty");
    let series: Vec<f64> = map.p.column(strongest).to_vec();
    let top = series.iter().cloned().fold(0.0f64, f64::max);
    let rise = first_crossing(times, &series, 0.5 * top)
        .ok_or_else(|| CliError::Io("series never reaches half its maximum".into()))?;
    let occupation =
        (0..map.pm.shape()[0]).map(|m| m as f64 * map.pm[[m, last, strongest]]).sum();
    Ok((rise, occupation))
}

fn array_scaling(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let sizes = run.grids.n_atoms.as_ref().unwrap();
    let rayleigh = run.grids.omega_rayleigh.unwrap().values();
    let shg = run.grids.omega_shg.unwrap().values();
    let times = run.grids.time.unwrap().values();
    let mut table = Table::new(&["n",
        "t_rayleigh",
        "t_shg",
        "p_rayleigh",
        "p_shg",]);
    let mut failures = Vec::new();
    for &n in sizes {
        let mut spec = run.model.clone();
        spec.n_atoms = Some(n);
        let point = window_metrics(&spec, &rayleigh, &times, &run.numerics).and_then(|r| {
            Ok((r, window_metrics(&spec, &shg, &times, &run.numerics)?))
        });
        match point {
            Ok(((t_ray, p_ray), (t_shg, p_shg))) => {
                table.push(vec![n as f64, t_ray, t_shg, p_ray, p_shg]);
            }
            Err(e) => failures.push(PointFailure { label: format!("n = {n}"), message: e.to_string() }),
        }
    }
    let mut files = Vec::new();
    if !table.rows.is_empty() {
        files.push(emit(out_dir, run, "scaling", &table, None, overwrite)?);
    }
    Ok(RunOutcome { files, failures })
}

/// The launch points of a motion or mixed run: `(label, model)` per sweep
/// entry, labels empty when the config sweeps nothing.
fn launch_points(run: &RunConfig) -> Result<Vec<(String, ModelSpec)>, CliError> {
    let Some(p_values) = &run.grids.p_0 else {
        return Ok(vec![(String::new(), run.model.clone())]);
    };
    let mut points = Vec::new();
    for (i, &p) in p_values.iter().enumerate() {
        let mut spec = run.model.clone();
        spec.p_0 = Some(p);
        if let Some(x_values) = &run.grids.x_0 {
            spec.x_0 = Some(x_values[i]);
        }
        points.push((format!("p0-{p}"), spec));
    }
    Ok(points)
}

/// Position-density frames over the time grid plus the first-order emission
/// spectrum, one pair of files per launch momentum. Eigendecompositions are
/// cached under the output directory keyed by the model hash.
fn motion(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let omega = run.grids.omega_b.unwrap().values();
    let times = run.grids.time.unwrap().values();
    let cache = out_dir.join(".eigen-cache");
    let mut outcome = RunOutcome::default();
    for (label, spec) in launch_points(run)? {
        let kind = |base: &str| {
            if label.is_empty() {
                base.to_string()
            } else {
                format!("{label}.{base}")
            }
        };
        let result = (|| -> Result<Vec<PathBuf>, CliError> {
            let dx = spec.grid()?.dx;
            let h = build(&spec)?;
            let psi0 = initial_state(&spec)?;
            let density = Observable {
                name: "position density".into(),
                eval: Box::new(move |_, psi: &StateVector| {
                    nuclear_density(psi, dx).expect("state layout carries a position factor")
                }),
            };
            let (_, trajectory) = propagate(&h, &psi0, &times, &[density], &run.numerics)?;
            let grid = spec.grid()?;
            let xs: Vec<f64> = (0..grid.points).map(|j| grid.x(j)).collect();
            let frames = &trajectory.series[0].values;
            let table = dataset::density_table(&times, &xs, frames);
            let density_path =
                emit(out_dir, run, &kind("density"), &table, Some(&spec), overwrite)?;

            let eigen = dataset::cached_diagonalize_h0(&spec, &cache)?;
            let channels = fluorescence_channels(&spec, &eigen.layout)?;
            let psi0 = initial_state_with(&spec, false)?;
            let observed = ObservationTime::Finite(*times.last().unwrap());
            let spectrum =
                perturbative_spectrum(&eigen, &channels, &psi0, &omega, observed, DEFAULT_SPECTRUM_BLOCK)?;
            let mut table = Table::new(&["omega_b", "p"]);
            for (w, p) in spectrum.omega.iter().zip(&spectrum.p) {
                table.push(vec![*w, *p]);
            }
            let spectrum_path =
                emit(out_dir, run, &kind("spectrum"), &table, Some(&spec), overwrite)?;
            Ok(vec![density_path, spectrum_path])
        })();
        match result {
            Ok(mut files) => outcome.files.append(&mut files),
            Err(e) => outcome.failures.push(PointFailure {
                label: if label.is_empty() { "single launch".into() } else { label },
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Classical-position trajectory with the quantum subsystem along for the
/// force; crossing events land in a separate JSON file next to the table.
fn ehrenfest(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let time = run.grids.time.unwrap();
    let steps = (time.stop / run.numerics.dt).round().max(1.0) as usize;
    let stride = (steps / (time.points - 1).max(1)).max(1);
    let cfg = EhrenfestConfig {
        dt: run.numerics.dt,
        t_max: time.stop,
        record_stride: stride,
        krylov: run.numerics,
    };
    let mut outcome = RunOutcome::default();
    for (label, spec) in launch_points(run)? {
        let kind = if label.is_empty() {
            "trajectory".to_string()
        } else {
            format!("{label}.trajectory")
        };
        match ehrenfest_evolve(&spec, &cfg) {
            Ok(trajectory) => {
                let mut table = Table::new(&["t",
                    "x",
                    "p",
                    "energy",
                    "force",
                    "fluorescence",]);
                for point in &trajectory.points {
                    table.push(vec![
                        point.t,
                        point.x,
                        point.p,
                        point.energy,
                        point.force,
                        point.fluorescence,
                    ]);
                }
                let path = emit(out_dir, run, &kind, &table, Some(&spec), overwrite)?;
                #[derive(Serialize)]
                struct Events {
                    crossing_time: Option<f64>,
                    box_exit_time: Option<f64>,
                }
                let events_path = out_dir.join(format!("{}.events.json", run.stem(&kind)));
                dataset::write_json(
                    &events_path,
                    &Events {
                        crossing_time: trajectory.crossing_time,
                        box_exit_time: trajectory.box_exit_time,
                    },
                    overwrite,
                )?;
                outcome.files.push(path);
                outcome.files.push(events_path);
            }
            Err(e) => outcome.failures.push(PointFailure {
                label: if label.is_empty() { "single launch".into() } else { label },
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Same drive in the full model and in its two-photon rotating-wave
/// reduction, on one frequency grid.
fn aea_compare(run: &RunConfig, out_dir: &Path, overwrite: bool) -> Result<RunOutcome, CliError> {
    let omega = run.grids.omega_b.unwrap().values();
    let t_final = run.grids.time.unwrap().final_time();
    let reduced = scan_spectrum(&run.model, &omega, t_final, &run.numerics)?;

    let mut full = run.model.clone();
    full.family = Family::TwoLevel;
    full.epsilon_2 = run.model.epsilon_3;
    full.g_a = run.model.f;
    full.f = None;
    full.epsilon_3 = None;
    let full_scan = scan_spectrum(&full, &omega, t_final, &run.numerics)?;

    let mut table = Table::new(&["omega_b", "p_full", "p_reduced"]);
    for (i, &w) in omega.iter().enumerate() {
        table.push(vec![w, full_scan.p[[0, i]], reduced.p[[0, i]]]);
    }
    let path = emit(out_dir, run, "compare", &table, Some(&full), overwrite)?;
    Ok(RunOutcome { files: vec![path], failures: vec![] })
}
