//! Run configuration: a strict TOML schema covering the model, the numerics,
//! the sweep grids, and the output policy. Unknown keys are rejected
//! everywhere so a typo never silently falls back to a default.

use std::path::PathBuf;

use fluor::hamiltonian::{Family, ModelSpec};
use fluor::propagator::KrylovConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// What the run computes and which dataset files it emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Emission spectrum at a single observation time.
    Spectrum,
    /// Emission spectrum on a full time grid.
    Timemap,
    /// Static eigenvalue curves versus the pump coupling.
    Levels,
    /// Critical pump coupling versus probe coupling for the collective model.
    DickeCritical,
    /// Rise times and photon counts of the elastic and second-harmonic
    /// windows versus array size.
    ArrayScaling,
    /// Wavepacket density frames and the emission spectrum for each launch
    /// momentum.
    Motion,
    /// Mixed classical/quantum trajectory of the moving atom.
    Ehrenfest,
    /// Full two-level spectrum against its two-photon rotating-wave
    /// reduction.
    AeaCompare,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Timemap => "timemap",
            Experiment::Levels => "levels",
            Experiment::DickeCritical => "dicke-critical",
            Experiment::ArrayScaling => "array-scaling",
            Experiment::Motion => "motion",
            Experiment::Ehrenfest => "ehrenfest",
            Experiment::AeaCompare => "aea-compare",
        }
    }
}

/// Uniform grid `start ..= stop` with `points` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            vec![self.start]
        } else {
            fluor::spectra::linspace(self.start, self.stop, self.points)
        }
    }

    fn validate(&self, key: &str) -> Result<(), CliError> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(CliError::Validation(format!("field `{key}` must have finite bounds")));
        }
        if self.points == 0 {
            return Err(CliError::Validation(format!(
                "field `{key}.points` must be positive, got 0"
            )));
        }
        if self.points > 1 && self.stop <= self.start {
            return Err(CliError::Validation(format!(
                "field `{key}` must have stop > start when points > 1"
            )));
        }
        Ok(())
    }
}

/// Observation-time grid; `start` defaults to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default)]
    pub start: f64,
    pub stop: f64,
    #[serde(default = "one")]
    pub points: usize,
}

fn one() -> usize {
    1
}

impl TimeSpec {
    /// The grid times; a single point means "observe at `stop` only".
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            vec![self.stop]
        } else {
            fluor::spectra::linspace(self.start, self.stop, self.points)
        }
    }

    /// Time to observe at when the experiment wants a single spectrum.
    pub fn final_time(&self) -> f64 {
        self.stop
    }

    fn validate(&self, key: &str) -> Result<(), CliError> {
        if !self.start.is_finite() || !self.stop.is_finite() || self.start < 0.0 {
            return Err(CliError::Validation(format!(
                "field `{key}` must have finite, nonnegative bounds"
            )));
        }
        if self.points == 0 {
            return Err(CliError::Validation(format!(
                "field `{key}.points` must be positive, got 0"
            )));
        }
        if self.points > 1 && self.stop <= self.start {
            return Err(CliError::Validation(format!(
                "field `{key}` must have stop > start when points > 1"
            )));
        }
        Ok(())
    }
}

/// Sweep axes. Which ones are required depends on the experiment; unused
/// axes must stay unset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    /// Probe (emission) frequency grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_b: Option<GridSpec>,
    /// Elastic-window frequency grid for the array scaling run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_rayleigh: Option<GridSpec>,
    /// Second-harmonic-window frequency grid for the array scaling run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_shg: Option<GridSpec>,
    /// Observation times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSpec>,
    /// Pump-coupling grid for the level curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_a: Option<GridSpec>,
    /// Collective probe-coupling grid for the stability boundary.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_b: Option<GridSpec>,
    /// Array sizes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<Vec<usize>>,
    /// Launch momenta; each entry is one sweep point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_0: Option<Vec<f64>>,
    /// Per-momentum start positions, parallel to `p_0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_0: Option<Vec<f64>>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

/// Where and how datasets are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Runs are seedless and bitwise reproducible; the flag exists so the
    /// contract is visible in every sidecar, and `false` is rejected.
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

impl Default for Output {
    fn default() -> Self {
        Output { directory: default_directory(), deterministic: true }
    }
}

/// One experiment run: everything needed to reproduce its datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset file prefix; required when a file defines several runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub experiment: Experiment,
    pub model: ModelSpec,
    #[serde(default)]
    pub numerics: KrylovConfig,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiRun {
    run: Vec<RunConfig>,
}

/// Parses a config file holding either a single run or a `[[run]]` array.
pub fn parse_runs(text: &str) -> Result<Vec<RunConfig>, CliError> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let runs = if value.get("run").is_some() {
        let multi: MultiRun = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        multi.run
    } else {
        vec![toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?]
    };
    if runs.is_empty() {
        return Err(CliError::Validation("config defines no runs".into()));
    }
    if runs.len() > 1 {
        for (i, run) in runs.iter().enumerate() {
            if run.name.as_deref().map_or(true, str::is_empty) {
                return Err(CliError::Validation(format!(
                    "field `run[{i}].name` is required when a file defines several runs"
                )));
            }
        }
        let mut names: Vec<&str> = runs.iter().filter_map(|r| r.name.as_deref()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::Validation(format!("field `run.name` repeats `{}`", w[0])));
        }
    }
    for run in &runs {
        run.validate()?;
    }
    Ok(runs)
}

impl RunConfig {
    fn require_grid<'a, T>(
        slot: &'a Option<T>,
        key: &str,
        experiment: &str,
    ) -> Result<&'a T, CliError> {
        slot.as_ref().ok_or_else(|| {
            CliError::Validation(format!(
                "field `grids.{key}` is required by the {experiment} experiment"
            ))
        })
    }

    /// Structural checks: the output policy, the grid axes the experiment
    /// needs, and the model family it accepts. Model fields themselves are
    /// validated by the library when the run builds operators.
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.output.deterministic {
            return Err(CliError::Validation(
                "field `output.deterministic` must be true: runs are seedless by contract".into(),
            ));
        }
        let name = self.experiment.name();
        match self.experiment {
            Experiment::Spectrum | Experiment::Timemap => {
                let omega = Self::require_grid(&self.grids.omega_b, "omega_b", name)?;
                omega.validate("grids.omega_b")?;
                let time = Self::require_grid(&self.grids.time, "time", name)?;
                time.validate("grids.time")?;
                if self.experiment == Experiment::Timemap
                    && (time.points < 2 || time.start != 0.0)
                {
                    return Err(CliError::Validation(
                        "field `grids.time` must start at 0 with at least 2 points for a timemap"
                            .into(),
                    ));
                }
                if self.model.family == Family::MovingAtom {
                    return Err(CliError::Validation(
                        "field `experiment` must be `motion` for the moving-atom family".into(),
                    ));
                }
            }
            Experiment::Levels => {
                let g = Self::require_grid(&self.grids.g_a, "g_a", name)?;
                g.validate("grids.g_a")?;
                if self.model.family != Family::TwoLevel {
                    return Err(CliError::Validation(
                        "field `model.family` must be `two-level` for level curves".into(),
                    ));
                }
            }
            Experiment::DickeCritical => {
                let grid = Self::require_grid(&self.grids.lambda_b, "lambda_b", name)?;
                grid.validate("grids.lambda_b")?;
                for (key, value) in [
                    ("omega_s", self.model.omega_s),
                    ("omega_a", self.model.omega_a),
                    ("omega_b", self.model.omega_b),
                ] {
                    match value {
                        Some(v) if v.is_finite() && v > 0.0 => {}
                        Some(v) => {
                            return Err(CliError::Validation(format!(
                                "field `model.{key}` must be positive and finite, got {v}"
                            )))
                        }
                        None => {
                            return Err(CliError::Validation(format!(
                                "field `model.{key}` is required by the dicke-critical experiment"
                            )))
                        }
                    }
                }
            }
            Experiment::ArrayScaling => {
                let sizes = Self::require_grid(&self.grids.n_atoms, "n_atoms", name)?;
                if sizes.is_empty() {
                    return Err(CliError::Validation(
                        "field `grids.n_atoms` must list at least one size".into(),
                    ));
                }
                Self::require_grid(&self.grids.omega_rayleigh, "omega_rayleigh", name)?
                    .validate("grids.omega_rayleigh")?;
                Self::require_grid(&self.grids.omega_shg, "omega_shg", name)?
                    .validate("grids.omega_shg")?;
                let time = Self::require_grid(&self.grids.time, "time", name)?;
                time.validate("grids.time")?;
                if time.points < 2 || time.start != 0.0 {
                    return Err(CliError::Validation(
                        "field `grids.time` must start at 0 with at least 2 points to resolve \
                         rise times"
                            .into(),
                    ));
                }
                if self.model.family != Family::Array {
                    return Err(CliError::Validation(
                        "field `model.family` must be `array` for the scaling run".into(),
                    ));
                }
            }
            Experiment::Motion | Experiment::Ehrenfest => {
                if self.model.family != Family::MovingAtom {
                    return Err(CliError::Validation(format!(
                        "field `model.family` must be `moving-atom` for the {name} experiment"
                    )));
                }
                let time = Self::require_grid(&self.grids.time, "time", name)?;
                time.validate("grids.time")?;
                if time.points < 2 || (self.experiment == Experiment::Motion && time.start != 0.0)
                {
                    return Err(CliError::Validation(
                        "field `grids.time` must start at 0 with at least 2 points to record \
                         frames"
                            .into(),
                    ));
                }
                if self.experiment == Experiment::Motion {
                    Self::require_grid(&self.grids.omega_b, "omega_b", name)?
                        .validate("grids.omega_b")?;
                }
                match (&self.grids.p_0, &self.grids.x_0) {
                    (Some(p), Some(x)) if p.len() != x.len() => {
                        return Err(CliError::Validation(format!(
                            "field `grids.x_0` must match `grids.p_0` in length ({} vs {})",
                            x.len(),
                            p.len()
                        )));
                    }
                    (None, Some(_)) => {
                        return Err(CliError::Validation(
                            "field `grids.x_0` requires `grids.p_0`".into(),
                        ));
                    }
                    _ => {}
                }
            }
            Experiment::AeaCompare => {
                if self.model.family != Family::RwaAea {
                    return Err(CliError::Validation(
                        "field `model.family` must be `rwa-aea` for the comparison run".into(),
                    ));
                }
                Self::require_grid(&self.grids.omega_b, "omega_b", name)?
                    .validate("grids.omega_b")?;
                let time = Self::require_grid(&self.grids.time, "time", name)?;
                time.validate("grids.time")?;
            }
        }
        self.reject_unused_axes()?;
        Ok(())
    }

    /// A grid axis the experiment never reads is a config mistake, not noise.
    fn reject_unused_axes(&self) -> Result<(), CliError> {
        let used: &[&str] = match self.experiment {
            Experiment::Spectrum | Experiment::Timemap => &["omega_b", "time"],
            Experiment::Levels => &["g_a"],
            Experiment::DickeCritical => &["lambda_b"],
            Experiment::ArrayScaling => &["omega_rayleigh", "omega_shg", "time", "n_atoms"],
            Experiment::Motion => &["omega_b", "time", "p_0", "x_0"],
            Experiment::Ehrenfest => &["time", "p_0", "x_0"],
            Experiment::AeaCompare => &["omega_b", "time"],
        };
        let set: [(&str, bool); 9] = [
            ("omega_b", self.grids.omega_b.is_some()),
            ("omega_rayleigh", self.grids.omega_rayleigh.is_some()),
            ("omega_shg", self.grids.omega_shg.is_some()),
            ("time", self.grids.time.is_some()),
            ("g_a", self.grids.g_a.is_some()),
            ("lambda_b", self.grids.lambda_b.is_some()),
            ("n_atoms", self.grids.n_atoms.is_some()),
            ("p_0", self.grids.p_0.is_some()),
            ("x_0", self.grids.x_0.is_some()),
        ];
        for (key, present) in set {
            if present && !used.contains(&key) {
                return Err(CliError::Validation(format!(
                    "field `grids.{key}` is not read by the {} experiment",
                    self.experiment.name()
                )));
            }
        }
        Ok(())
    }

    /// File stem for this run's datasets: `<name>.<kind>.csv`.
    pub fn stem(&self, kind: &str) -> String {
        match &self.name {
            Some(name) => format!("{name}.{kind}"),
            None => kind.to_string(),
        }
    }
}
