//! Fluorescence spectra from repeated propagation.
//!
//! The fluorescence mode frequency is not a spectator: each spectral point
//! requires its own propagation with the probe mode retuned to that
//! frequency. [`time_resolved_map`] runs the scan over a frequency grid and
//! records the photon-number-resolved fluorescence probabilities on a common
//! time grid; [`scan_spectrum`] is the final-time slice of the same scan.
//! Peak bookkeeping (local maxima, widths, threshold crossings, power-law
//! fits) lives here too.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::fock::{initial_state, Factor, StateVector};
use crate::hamiltonian::{build, ModelSpec};
use crate::propagator::{propagate, KrylovConfig, Observable};
use crate::{Error, Result};

/// Uniform grid of `n >= 2` points covering `[a, b]` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "a grid needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
    grid[n - 1] = b;
    grid
}

/// Per-photon-number fluorescence probabilities of a state, indexed by the
/// probe-mode occupation `m = 0..=n_b_max`.
pub fn fluorescence_probability(psi: &StateVector) -> Result<Vec<f64>> {
    psi.layout.axis(Factor::FluorescencePhoton).ok_or_else(|| {
        Error::model("state has no fluorescence factor to take probabilities from")
    })?;
    psi.factor_marginal(Factor::FluorescencePhoton)
}

/// Spectral scan output: probabilities on the (time, frequency) product grid.
#[derive(Debug, Clone)]
pub struct SpectrumDataset {
    pub omega: Vec<f64>,
    pub times: Vec<f64>,
    /// Total fluorescence probability (any nonzero probe occupation),
    /// indexed `[time, frequency]`.
    pub p: Array2<f64>,
    /// Occupation-resolved probabilities, indexed `[m, time, frequency]`.
    pub pm: Array3<f64>,
    /// Largest per-step norm drift across the whole scan.
    pub max_step_drift: f64,
    /// Largest accepted subspace-residual estimate across the whole scan.
    pub max_residual: f64,
    /// Total step halvings across the whole scan.
    pub total_halvings: u64,
}

impl SpectrumDataset {
    /// Final-time spectrum as `(omega, p)` pairs.
    pub fn final_spectrum(&self) -> Vec<(f64, f64)> {
        let last = self.times.len() - 1;
        self.omega.iter().cloned().zip(self.p.row(last).iter().cloned()).collect()
    }
}

struct OmegaColumn {
    pm: Array2<f64>,
    max_step_drift: f64,
    max_residual: f64,
    total_halvings: u64,
}

/// Runs one propagation per frequency grid point with the probe mode retuned
/// to that frequency, recording occupation-resolved fluorescence
/// probabilities at every grid time. Columns are computed independently (in
/// parallel when a rayon pool is active) and assembled in grid order, so the
/// output does not depend on the worker count.
pub fn time_resolved_map(
    spec: &ModelSpec,
    omega_grid: &[f64],
    times: &[f64],
    cfg: &KrylovConfig,
) -> Result<SpectrumDataset> {
    if omega_grid.is_empty() {
        return Err(Error::ScanFailure("empty frequency grid".into()));
    }
    if omega_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::ScanFailure("frequency grid must be strictly increasing".into()));
    }
    spec.validate()?;
    let n_b_dim = spec.resolved_n_b_max() + 1;

    let columns: Vec<OmegaColumn> = omega_grid
        .par_iter()
        .map(|&omega_b| -> Result<OmegaColumn> {
            let mut point = spec.clone();
            point.omega_b = Some(omega_b);
            let h = build(&point)?;
            let psi0 = initial_state(&point)?;
            let observable = Observable {
                name: "fluorescence occupation probabilities".into(),
                eval: Box::new(|_, psi: &StateVector| {
                    fluorescence_probability(psi).expect("probe factor present")
                }),
            };
            let (_, trajectory) = propagate(&h, &psi0, times, &[observable], cfg)
                .map_err(|e| scan_context(omega_b, e))?;
            let mut pm = Array2::<f64>::zeros((times.len(), n_b_dim));
            for (ti, record) in trajectory.series[0].values.iter().enumerate() {
                let total: f64 = record.iter().sum();
                if (total - 1.0).abs() > 1e-8 {
                    return Err(Error::ScanFailure(format!(
                        "occupation probabilities at omega_b = {omega_b} sum to {total}, not 1"
                    )));
                }
                for (m, &value) in record.iter().enumerate() {
                    if !(-1e-12..=1.0 + 1e-12).contains(&value) {
                        return Err(Error::ScanFailure(format!(
                            "probability {value} outside [0, 1] at omega_b = {omega_b}"
                        )));
                    }
                    pm[[ti, m]] = value;
                }
            }
            Ok(OmegaColumn {
                pm,
                max_step_drift: trajectory.max_step_drift,
                max_residual: trajectory.max_residual,
                total_halvings: trajectory.total_halvings,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pm = Array3::<f64>::zeros((n_b_dim, times.len(), omega_grid.len()));
    let mut p = Array2::<f64>::zeros((times.len(), omega_grid.len()));
    let mut max_step_drift = 0.0f64;
    let mut max_residual = 0.0f64;
    let mut total_halvings = 0u64;
    for (wi, column) in columns.iter().enumerate() {
        for ti in 0..times.len() {
            let mut above_vacuum = 0.0;
            for m in 0..n_b_dim {
                let value = column.pm[[ti, m]];
                pm[[m, ti, wi]] = value;
                if m > 0 {
                    above_vacuum += value;
                }
            }
            p[[ti, wi]] = above_vacuum;
        }
        max_step_drift = max_step_drift.max(column.max_step_drift);
        max_residual = max_residual.max(column.max_residual);
        total_halvings += column.total_halvings;
    }
    Ok(SpectrumDataset {
        omega: omega_grid.to_vec(),
        times: times.to_vec(),
        p,
        pm,
        max_step_drift,
        max_residual,
        total_halvings,
    })
}

fn scan_context(omega_b: f64, e: Error) -> Error {
    match e {
        Error::Propagation { t, message } => Error::ScanFailure(format!(
            "propagation failed at t = {t} with omega_b = {omega_b}: {message}"
        )),
        other => other,
    }
}

/// Spectrum at a single observation time: a [`time_resolved_map`] with the
/// grid `{0, t_final}`, reduced to the final row.
pub fn scan_spectrum(
    spec: &ModelSpec,
    omega_grid: &[f64],
    t_final: f64,
    cfg: &KrylovConfig,
) -> Result<SpectrumDataset> {
    let map = time_resolved_map(spec, omega_grid, &[0.0, t_final], cfg)?;
    let last = map.times.len() - 1;
    Ok(SpectrumDataset {
        omega: map.omega.clone(),
        times: vec![map.times[last]],
        p: map.p.slice(ndarray::s![last..=last, ..]).to_owned(),
        pm: map.pm.slice(ndarray::s![.., last..=last, ..]).to_owned(),
        max_step_drift: map.max_step_drift,
        max_residual: map.max_residual,
        total_halvings: map.total_halvings,
    })
}

/// A local maximum of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub omega: f64,
    pub height: f64,
}

/// Strict interior local maxima, skipping ripples below
/// `min_relative_height` times the global maximum. Flat-topped peaks count
/// once, at the left edge of the plateau.
pub fn local_maxima(omega: &[f64], values: &[f64], min_relative_height: f64) -> Vec<Peak> {
    assert_eq!(omega.len(), values.len());
    let global = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = global * min_relative_height;
    let mut peaks = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // Scan across any plateau at this height.
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] && values[i] >= floor {
                peaks.push(Peak { index: i, omega: omega[i], height: values[i] });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Local maxima restricted to `lo <= omega <= hi`, with the relative-height
/// floor taken from the window's own maximum.
pub fn maxima_in_window(
    omega: &[f64],
    values: &[f64],
    lo: f64,
    hi: f64,
    min_relative_height: f64,
) -> Vec<Peak> {
    let window_max = omega
        .iter()
        .zip(values)
        .filter(|(w, _)| (lo..=hi).contains(*w))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    local_maxima(omega, values, 0.0)
        .into_iter()
        .filter(|p| (lo..=hi).contains(&p.omega) && p.height >= window_max * min_relative_height)
        .collect()
}

/// Width and position metrics of one peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakMetrics {
    pub omega: f64,
    pub height: f64,
    /// Full width at half maximum from linear interpolation; `None` when a
    /// half-height crossing falls outside the sampled grid.
    pub fwhm: Option<f64>,
}

/// Measures FWHM of the peak at `peak.index` by walking to the half-height
/// crossings on both sides and interpolating linearly.
pub fn peak_metrics(omega: &[f64], values: &[f64], peak: &Peak) -> PeakMetrics {
    let half = peak.height / 2.0;
    let cross = |mut i: usize, step: isize| -> Option<f64> {
        loop {
            let next = i as isize + step;
            if next < 0 || next as usize >= values.len() {
                return None;
            }
            let j = next as usize;
            if values[j] <= half {
                let frac = (values[i] - half) / (values[i] - values[j]);
                return Some(omega[i] + frac * (omega[j] - omega[i]));
            }
            i = j;
        }
    };
    let left = cross(peak.index, -1);
    let right = cross(peak.index, 1);
    PeakMetrics {
        omega: peak.omega,
        height: peak.height,
        fwhm: match (left, right) {
            (Some(l), Some(r)) => Some(r - l),
            _ => None,
        },
    }
}

/// First time at which `values` reaches `threshold`, linearly interpolated;
/// `None` when the series never gets there.
pub fn first_crossing(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    if values[0] >= threshold {
        return Some(times[0]);
    }
    for i in 1..values.len() {
        if values[i] >= threshold {
            let frac = (threshold - values[i - 1]) / (values[i] - values[i - 1]);
            return Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    None
}

/// Least-squares fit of `y = c * x^p` in log-log space; returns `(p, c)`.
/// All inputs must be strictly positive.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::model("power-law fit needs at least two (x, y) pairs"));
    }
    if x.iter().chain(y).any(|&v| v <= 0.0) {
        return Err(Error::model("power-law fit needs strictly positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::model("power-law fit needs at least two distinct x values"));
    }
    let p = sxy / sxx;
    let c = (my - p * mx).exp();
    Ok((p, c))
}

/// Emitter-count scaling of the array model at one probe frequency:
/// threshold-crossing time and mean probe occupation at a reference time,
/// for each array size.
#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub n_atoms: usize,
    /// First time the fluorescence probability reaches the threshold.
    pub onset_time: Option<f64>,
    /// Mean probe-mode occupation at the reference time.
    pub occupation: f64,
}

/// Runs the array model for each `n_atoms` at a fixed probe frequency and
/// extracts onset times (threshold crossing of the total fluorescence
/// probability) and mean probe occupations at `t_reference`.
pub fn array_scaling(
    base: &ModelSpec,
    n_values: &[usize],
    omega_b: f64,
    times: &[f64],
    threshold: f64,
    t_reference: f64,
    cfg: &KrylovConfig,
) -> Result<Vec<ScalingPoint>> {
    let t_ref_index = times
        .iter()
        .position(|&t| (t - t_reference).abs() <= 1e-9 * t_reference.max(1.0))
        .ok_or_else(|| Error::model("reference time must be one of the grid times"))?;
    n_values
        .iter()
        .map(|&n| {
            let mut spec = base.clone();
            spec.n_atoms = Some(n);
            let map = time_resolved_map(&spec, &[omega_b], times, cfg)?;
            let series: Vec<f64> = map.p.column(0).to_vec();
            let onset_time = first_crossing(times, &series, threshold);
            let occupation = (0..map.pm.shape()[0])
                .map(|m| m as f64 * map.pm[[m, t_ref_index, 0]])
                .sum();
            Ok(ScalingPoint { n_atoms: n, onset_time, occupation })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::test_support::two_level_spec;

    #[test]
    fn linspace_hits_both_endpoints_exactly() {
        let g = linspace(0.5, 1.5, 101);
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[100], 1.5);
        assert!((g[50] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_maxima_finds_three_peaks_and_skips_ripple() {
        let omega: Vec<f64> = linspace(0.0, 10.0, 201);
        let curve: Vec<f64> = omega
            .iter()
            .map(|&w| {
                let peak = |c: f64, h: f64| h / (1.0 + ((w - c) / 0.2).powi(2));
                peak(2.0, 1.0) + peak(5.0, 0.4) + peak(8.0, 0.7) + 1e-9 * (40.0 * w).sin()
            })
            .collect();
        let peaks = local_maxima(&omega, &curve, 1e-4);
        assert_eq!(peaks.len(), 3, "peaks found: {peaks:?}");
        assert!((peaks[0].omega - 2.0).abs() < 0.06);
        assert!((peaks[1].omega - 5.0).abs() < 0.06);
        assert!((peaks[2].omega - 8.0).abs() < 0.06);
    }

    #[test]
    fn plateau_counts_as_one_peak() {
        let omega: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let values = vec![0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        let peaks = local_maxima(&omega, &values, 0.0);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].index, 2);
    }

    #[test]
    fn lorentzian_fwhm_is_recovered() {
        let omega: Vec<f64> = linspace(-3.0, 3.0, 601);
        let gamma = 0.25;
        let values: Vec<f64> =
            omega.iter().map(|&w| 1.0 / (1.0 + (w / gamma).powi(2))).collect();
        let peaks = local_maxima(&omega, &values, 0.0);
        assert_eq!(peaks.len(), 1);
        let metrics = peak_metrics(&omega, &values, &peaks[0]);
        let fwhm = metrics.fwhm.expect("crossings inside the grid");
        assert!(
            (fwhm - 2.0 * gamma).abs() < 0.01,
            "measured FWHM {fwhm}, expected {}",
            2.0 * gamma
        );
    }

    #[test]
    fn power_law_fit_recovers_exponents() {
        let x = [2.0, 3.0, 4.0, 6.0, 8.0];
        let y: Vec<f64> = x.iter().map(|&v: &f64| 0.7 * v.powf(-1.3)).collect();
        let (p, c) = fit_power_law(&x, &y).unwrap();
        assert!((p + 1.3).abs() < 1e-10);
        assert!((c - 0.7).abs() < 1e-10);
    }

    #[test]
    fn first_crossing_interpolates() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [0.0, 0.2, 0.6, 0.9];
        let c = first_crossing(&t, &v, 0.4).unwrap();
        assert!((c - 1.5).abs() < 1e-12);
        assert!(first_crossing(&t, &v, 2.0).is_none());
        assert_eq!(first_crossing(&t, &v, 0.0).unwrap(), 0.0);
    }

    fn fast_spec() -> crate::hamiltonian::ModelSpec {
        let mut spec = two_level_spec();
        spec.n_a_max = Some(6);
        spec.allow_low_cutoff = true;
        spec.n_b_max = Some(4);
        spec
    }

    #[test]
    fn scan_matches_the_final_row_of_the_time_map_bitwise() {
        let spec = fast_spec();
        let cfg = KrylovConfig::default();
        let omega = linspace(0.8, 1.2, 3);
        let times: Vec<f64> = (0..=8).map(|i| i as f64 * 1.25).collect();
        let map = time_resolved_map(&spec, &omega, &times, &cfg).unwrap();
        let scan = scan_spectrum(&spec, &omega, 10.0, &cfg).unwrap();
        for wi in 0..omega.len() {
            assert_eq!(
                map.p[[times.len() - 1, wi]],
                scan.p[[0, wi]],
                "snapshot schedule changed the arithmetic at grid point {wi}"
            );
        }
    }

    #[test]
    fn probabilities_are_normalized_and_grow_from_zero() {
        let spec = fast_spec();
        let cfg = KrylovConfig::default();
        let times = vec![0.0, 5.0, 10.0];
        let map = time_resolved_map(&spec, &[1.0], &times, &cfg).unwrap();
        // Vacuum probe at t = 0.
        assert!((map.pm[[0, 0, 0]] - 1.0).abs() < 1e-12);
        assert!(map.p[[0, 0]].abs() < 1e-12);
        // Some fluorescence accumulates on resonance.
        assert!(map.p[[2, 0]] > 1e-8, "no fluorescence grew: {}", map.p[[2, 0]]);
        for ti in 0..times.len() {
            let total: f64 = (0..map.pm.shape()[0]).map(|m| map.pm[[m, ti, 0]]).sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn window_filter_respects_bounds() {
        let omega: Vec<f64> = linspace(0.0, 10.0, 201);
        let curve: Vec<f64> = omega
            .iter()
            .map(|&w| {
                let peak = |c: f64, h: f64| h / (1.0 + ((w - c) / 0.2).powi(2));
                peak(2.0, 1.0) + peak(5.0, 0.4) + peak(8.0, 0.7)
            })
            .collect();
        let inside = maxima_in_window(&omega, &curve, 4.0, 6.0, 1e-3);
        assert_eq!(inside.len(), 1);
        assert!((inside[0].omega - 5.0).abs() < 0.06);
    }
}
