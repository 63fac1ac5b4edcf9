//! Normal-mode criticality of the collective model with two bosonic modes.
//!
//! In the large-array limit the quadratic (Holstein-Primakoff) expansion
//! around the normal phase yields a 3x3 stiffness matrix coupling the
//! collective spin to the pump and probe modes. Its lowest eigenvalue is the
//! soft-mode frequency; the normal phase is stable while it is positive, and
//! the critical coupling surface is where it crosses zero, equivalently where
//! the determinant vanishes.

use ndarray::{arr2, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;

use crate::{Error, Result};

/// Mode frequencies of the collective model: spin splitting and the two
/// boson modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveFrequencies {
    pub omega_s: f64,
    pub omega_a: f64,
    pub omega_b: f64,
}

impl CollectiveFrequencies {
    pub fn new(omega_s: f64, omega_a: f64, omega_b: f64) -> Result<Self> {
        if [omega_s, omega_a, omega_b].iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::model("mode frequencies must be positive and finite"));
        }
        Ok(CollectiveFrequencies { omega_s, omega_a, omega_b })
    }

    /// All three frequencies equal to one.
    pub fn resonant() -> Self {
        CollectiveFrequencies { omega_s: 1.0, omega_a: 1.0, omega_b: 1.0 }
    }

    /// Pump at half the transition frequency, probe on resonance: the
    /// second-harmonic benchmark configuration.
    pub fn half_pump() -> Self {
        CollectiveFrequencies { omega_s: 1.0, omega_a: 0.5, omega_b: 1.0 }
    }
}

/// Stiffness matrix of the quadratic expansion at collective couplings
/// `lambda_a = N g_a`, `lambda_b = N g_b`.
pub fn stiffness_matrix(freq: &CollectiveFrequencies, lambda_a: f64, lambda_b: f64) -> Array2<f64> {
    arr2(&[
        [freq.omega_s, 2.0 * lambda_a, 2.0 * lambda_b],
        [2.0 * lambda_a, freq.omega_a, 0.0],
        [2.0 * lambda_b, 0.0, freq.omega_b],
    ])
}

/// Stiffness determinant in closed form; its sign decides stability.
pub fn det_stiffness(freq: &CollectiveFrequencies, lambda_a: f64, lambda_b: f64) -> f64 {
    freq.omega_s * freq.omega_a * freq.omega_b
        - 4.0 * lambda_a * lambda_a * freq.omega_b
        - 4.0 * lambda_b * lambda_b * freq.omega_a
}

/// Soft-mode frequency with its composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowestMode {
    pub omega0: f64,
    /// Components of the soft mode on (spin, pump, probe).
    pub coefficients: [f64; 3],
    /// Set when the two lowest modes are numerically degenerate, in which
    /// case the coefficients span an arbitrary direction in the degenerate
    /// plane.
    pub degenerate: bool,
}

/// Lowest stiffness eigenvalue and eigenvector.
pub fn lowest_mode(
    freq: &CollectiveFrequencies,
    lambda_a: f64,
    lambda_b: f64,
) -> Result<LowestMode> {
    let k = stiffness_matrix(freq, lambda_a, lambda_b);
    let (evals, evecs) = k
        .eigh(UPLO::Lower)
        .map_err(|e| Error::model(format!("stiffness eigensolve failed: {e}")))?;
    let scale = evals.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    let degenerate = (evals[1] - evals[0]).abs() < 1e-9 * scale;
    let column = evecs.column(0);
    Ok(LowestMode {
        omega0: evals[0],
        coefficients: [column[0], column[1], column[2]],
        degenerate,
    })
}

/// Critical pump coupling at fixed probe coupling, from the vanishing
/// determinant: `lambda_a_c = sqrt((w_s w_a w_b - 4 lambda_b^2 w_a) / (4 w_b))`.
/// `None` when the probe coupling alone already destabilizes the normal
/// phase.
pub fn critical_lambda_a(freq: &CollectiveFrequencies, lambda_b: f64) -> Option<f64> {
    let numerator = freq.omega_s * freq.omega_a * freq.omega_b
        - 4.0 * lambda_b * lambda_b * freq.omega_a;
    if numerator < 0.0 {
        None
    } else {
        Some((numerator / (4.0 * freq.omega_b)).sqrt())
    }
}

/// Critical curve sampled over a grid of probe couplings.
pub fn critical_curve(
    freq: &CollectiveFrequencies,
    lambda_b_grid: &[f64],
) -> Vec<(f64, Option<f64>)> {
    lambda_b_grid.iter().map(|&lb| (lb, critical_lambda_a(freq, lb))).collect()
}

/// Cross-check of [`critical_lambda_a`] that bisects the soft-mode frequency
/// to its zero instead of using the closed form.
pub fn critical_lambda_a_bisect(
    freq: &CollectiveFrequencies,
    lambda_b: f64,
) -> Result<Option<f64>> {
    let soft = |la: f64| -> Result<f64> { Ok(lowest_mode(freq, la, lambda_b)?.omega0) };
    if soft(0.0)? <= 0.0 {
        return Ok(None);
    }
    // The soft mode decreases monotonically with the coupling; find an upper
    // bracket, then bisect.
    let mut hi = 0.25 * (freq.omega_s * freq.omega_a * freq.omega_b).sqrt().max(1.0);
    let mut tries = 0;
    while soft(hi)? > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::model("no unstable coupling found while bracketing"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if soft(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Closed-form soft-mode frequency of the half-pump configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormOmega0 {
    pub value: f64,
    /// Magnitude of the imaginary part left over by the complex cube roots;
    /// reported so the caller can judge whether the real part is meaningful.
    pub imaginary_residue: f64,
}

/// Cubic-formula expression for the soft mode of the half-pump
/// configuration:
/// `omega0 = (11 - 4 beta (2/A)^(1/3) - 4 (A/2)^(1/3)) / 12` with
/// `A = alpha - sqrt(alpha^2 - 4 beta^3)`,
/// `alpha = 1/32 + 9 lambda_a^2 - 18 lambda_b^2` and
/// `beta = 1/16 + 12 lambda_a^2 + 12 lambda_b^2`, all roots taken as
/// principal complex branches. The result disagrees with the stiffness
/// eigensolver by a quarter at zero coupling; compare before trusting
/// either in a new regime.
pub fn closed_form_omega0(lambda_a: f64, lambda_b: f64) -> ClosedFormOmega0 {
    let la2 = lambda_a * lambda_a;
    let lb2 = lambda_b * lambda_b;
    let alpha = Complex64::new(1.0 / 32.0 + 9.0 * la2 - 18.0 * lb2, 0.0);
    let beta = Complex64::new(1.0 / 16.0 + 12.0 * la2 + 12.0 * lb2, 0.0);
    let a = alpha - (alpha * alpha - 4.0 * beta * beta * beta).sqrt();
    let third = 1.0 / 3.0;
    let omega = (Complex64::new(11.0, 0.0)
        - 4.0 * beta * (2.0 / a).powf(third)
        - 4.0 * (a / 2.0).powf(third))
        / 12.0;
    ClosedFormOmega0 { value: omega.re, imaginary_residue: omega.im.abs() }
}

/// Smallest array size whose collective couplings `lambda = N g` destabilize
/// the normal phase (determinant zero counts as critical).
pub fn estimate_critical_n(freq: &CollectiveFrequencies, g_a: f64, g_b: f64) -> Result<u64> {
    let denominator = 4.0 * (g_a * g_a * freq.omega_b + g_b * g_b * freq.omega_a);
    if denominator <= 0.0 {
        return Err(Error::model(
            "at least one coupling must be nonzero to reach the transition",
        ));
    }
    let exact = (freq.omega_s * freq.omega_a * freq.omega_b / denominator).sqrt();
    // An integer hit means the determinant vanishes exactly at that size.
    let rounded = exact.round();
    let n = if (exact - rounded).abs() < 1e-9 { rounded } else { exact.ceil() };
    if n < 1.0 || !n.is_finite() {
        return Err(Error::model(format!("critical size estimate {exact} is out of range")));
    }
    Ok(n as u64)
}
