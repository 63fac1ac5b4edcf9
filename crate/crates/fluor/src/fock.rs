//! Tensor-product bases, coherent states and flat-index arithmetic.
//!
//! Every model lives on a product of up to four factors in a fixed order:
//! electron level, center-of-mass grid point, pump-photon count and
//! fluorescence-photon count. Flat indices are row-major with the last
//! present factor varying fastest, so operator layouts are reproducible
//! across runs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::{Family, ModelSpec};
use crate::{Error, Result};

/// Tensor factors in their fixed layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Factor {
    /// Electronic level index. The array family stores its collective-spin
    /// projection index here (0 = all atoms in the ground level).
    Electron,
    /// Center-of-mass grid index over the interior points of a hard-wall box.
    Position,
    PumpPhoton,
    FluorescencePhoton,
}

/// Bijection between flat indices and per-factor multi-indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLayout {
    factors: Vec<(Factor, usize)>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl BasisLayout {
    /// Builds a layout from `(factor, dimension)` pairs, which must follow
    /// the fixed factor order with no repeats and positive dimensions.
    pub fn new(factors: Vec<(Factor, usize)>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::model("basis layout needs at least one factor"));
        }
        for pair in factors.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::model(format!(
                    "factor order must be (electron, position, pump-photon, fluorescence-photon): {:?} cannot follow {:?}",
                    pair[1].0, pair[0].0
                )));
            }
        }
        for &(f, d) in &factors {
            if d == 0 {
                return Err(Error::model(format!("factor {f:?} has zero dimension")));
            }
        }
        let n = factors.len();
        let mut strides = vec![1usize; n];
        for i in (0..n - 1).rev() {
            strides[i] = strides[i + 1] * factors[i + 1].1;
        }
        let total_dim = strides[0] * factors[0].1;
        Ok(BasisLayout { factors, strides, total_dim })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn factors(&self) -> &[(Factor, usize)] {
        &self.factors
    }

    /// Factor dimensions in layout order.
    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|&(_, d)| d).collect()
    }

    /// Position of a factor within the layout, if present.
    pub fn axis(&self, f: Factor) -> Option<usize> {
        self.factors.iter().position(|&(g, _)| g == f)
    }

    pub fn has_factor(&self, f: Factor) -> bool {
        self.axis(f).is_some()
    }

    pub fn factor_dim(&self, f: Factor) -> Option<usize> {
        self.axis(f).map(|i| self.factors[i].1)
    }

    pub fn factor_stride(&self, f: Factor) -> Option<usize> {
        self.axis(f).map(|i| self.strides[i])
    }

    /// Flat index of a multi-index (one entry per factor, layout order).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.factors.len());
        let mut flat = 0;
        for (i, &m) in multi.iter().enumerate() {
            debug_assert!(m < self.factors[i].1, "index {m} outside factor {:?}", self.factors[i]);
            flat += m * self.strides[i];
        }
        flat
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        debug_assert!(flat < self.total_dim);
        self.factors
            .iter()
            .zip(&self.strides)
            .map(|(&(_, d), &s)| (flat / s) % d)
            .collect()
    }

    /// Extracts one factor's index from a flat index.
    pub fn factor_index(&self, f: Factor, flat: usize) -> Option<usize> {
        self.axis(f).map(|i| (flat / self.strides[i]) % self.factors[i].1)
    }
}

/// Normalized complex amplitudes over a [`BasisLayout`].
#[derive(Debug, Clone)]
pub struct StateVector {
    pub layout: BasisLayout,
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(layout: BasisLayout, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::model(format!(
                "amplitude length {} does not match layout dimension {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        Ok(StateVector { layout, amplitudes })
    }

    /// Single basis state `|multi⟩`.
    pub fn basis_state(layout: BasisLayout, multi: &[usize]) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); layout.total_dim()];
        amplitudes[layout.flat_index(multi)] = Complex64::new(1.0, 0.0);
        StateVector { layout, amplitudes }
    }

    /// Product state from per-factor amplitude vectors (layout order), then
    /// normalized.
    pub fn product_state(layout: BasisLayout, factors: &[Vec<Complex64>]) -> Result<Self> {
        if factors.len() != layout.factors().len() {
            return Err(Error::model("product state needs one amplitude vector per factor"));
        }
        for (f, amps) in layout.factors().iter().zip(factors) {
            if amps.len() != f.1 {
                return Err(Error::model(format!(
                    "factor {:?} expects {} amplitudes, got {}",
                    f.0,
                    f.1,
                    amps.len()
                )));
            }
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); layout.total_dim()];
        let n = factors.len();
        let mut idx = vec![0usize; n];
        loop {
            let mut a = Complex64::new(1.0, 0.0);
            for (f, &i) in idx.iter().enumerate() {
                a *= factors[f][i];
            }
            amplitudes[layout.flat_index(&idx)] = a;
            // Odometer increment over the multi-index.
            let mut axis = n;
            while axis > 0 {
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < layout.factors()[axis].1 {
                    break;
                }
                idx[axis] = 0;
                if axis == 0 {
                    let mut state = StateVector { layout, amplitudes };
                    state.normalize();
                    return Ok(state);
                }
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
    }

    /// Inner product `⟨self|other⟩`.
    pub fn overlap(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Probability distribution over one factor's index, summed over all
    /// other factors.
    pub fn factor_marginal(&self, f: Factor) -> Result<Vec<f64>> {
        let axis = self
            .layout
            .axis(f)
            .ok_or_else(|| Error::model(format!("layout has no {f:?} factor")))?;
        let dim = self.layout.factors()[axis].1;
        let stride = self.layout.factor_stride(f).unwrap();
        let mut out = vec![0.0; dim];
        for (flat, a) in self.amplitudes.iter().enumerate() {
            out[(flat / stride) % dim] += a.norm_sqr();
        }
        Ok(out)
    }
}

/// Coherent-state parameters: amplitude and the photon-number cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentSpec {
    pub alpha: f64,
    pub n_max: usize,
}

impl CoherentSpec {
    /// Smallest cutoff keeping the truncated Poisson tail mass below 1e-10.
    pub fn minimum_cutoff(alpha: f64) -> usize {
        (alpha * alpha + 8.0 * alpha.abs()).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::model("coherent alpha must be finite"));
        }
        let need = Self::minimum_cutoff(self.alpha);
        if self.n_max < need {
            return Err(Error::model(format!(
                "n_max = {} is below the tail-mass cutoff ceil(alpha^2 + 8|alpha|) = {} for alpha = {}",
                self.n_max, need, self.alpha
            )));
        }
        Ok(())
    }
}

/// Coherent amplitudes `c_n = e^{-alpha^2/2} alpha^n / sqrt(n!)` before any
/// renormalization, evaluated by a log-domain recursion so cutoffs up to a
/// few hundred stay overflow-free.
pub fn coherent_amplitudes_raw(alpha: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if alpha == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ln_abs = alpha.abs().ln();
    let mut ln_c = -alpha * alpha / 2.0;
    let mut sign = 1.0f64;
    out[0] = ln_c.exp();
    for (n, slot) in out.iter_mut().enumerate().skip(1) {
        ln_c += ln_abs - 0.5 * (n as f64).ln();
        if alpha < 0.0 {
            sign = -sign;
        }
        *slot = sign * ln_c.exp();
    }
    out
}

/// Truncated-tail probability mass `1 - sum_{n<=n_max} |c_n|^2`.
pub fn coherent_tail_mass(alpha: f64, n_max: usize) -> f64 {
    let raw = coherent_amplitudes_raw(alpha, n_max);
    (1.0 - raw.iter().map(|c| c * c).sum::<f64>()).max(0.0)
}

pub(crate) fn coherent_normalized(alpha: f64, n_max: usize) -> Vec<f64> {
    let mut amps = coherent_amplitudes_raw(alpha, n_max);
    let norm = amps.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut amps {
        *c /= norm;
    }
    amps
}

/// Coherent number-state amplitudes, renormalized to unit norm after
/// truncation. Rejects cutoffs that violate the tail-mass rule.
pub fn coherent_state(spec: &CoherentSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(coherent_normalized(spec.alpha, spec.n_max))
}

/// Basis layout for a model, with the fluorescence factor included for every
/// family except moving-atom (whose reference Hamiltonian omits it; see
/// [`build_basis_with`] for explicit control).
pub fn build_basis(model: &ModelSpec) -> Result<BasisLayout> {
    build_basis_with(model, model.family != Family::MovingAtom)
}

/// Basis layout with explicit control over the fluorescence factor.
pub fn build_basis_with(model: &ModelSpec, include_fluorescence: bool) -> Result<BasisLayout> {
    model.validate()?;
    let mut factors = vec![(Factor::Electron, model.electron_dim()?)];
    if model.family == Family::MovingAtom {
        factors.push((Factor::Position, model.grid()?.points));
    }
    if model.family != Family::Semiclassical {
        factors.push((Factor::PumpPhoton, model.resolved_n_a_max()? + 1));
    }
    if include_fluorescence {
        factors.push((Factor::FluorescencePhoton, model.resolved_n_b_max() + 1));
    }
    BasisLayout::new(factors)
}

/// Initial product state: electronic ground level, optional Gaussian
/// wavepacket, coherent pump, empty fluorescence mode. Fluorescence factor
/// presence follows [`build_basis`].
pub fn initial_state(model: &ModelSpec) -> Result<StateVector> {
    initial_state_with(model, model.family != Family::MovingAtom)
}

/// Initial state with explicit control over the fluorescence factor.
pub fn initial_state_with(model: &ModelSpec, include_fluorescence: bool) -> Result<StateVector> {
    let layout = build_basis_with(model, include_fluorescence)?;
    let mut factor_amps = Vec::with_capacity(layout.factors().len());
    for &(f, dim) in layout.factors() {
        let amps = match f {
            Factor::Electron | Factor::FluorescencePhoton => {
                let mut v = vec![Complex64::new(0.0, 0.0); dim];
                v[0] = Complex64::new(1.0, 0.0);
                v
            }
            Factor::Position => gaussian_packet(model)?,
            Factor::PumpPhoton => {
                let alpha = model.require("alpha", model.alpha)?;
                coherent_normalized(alpha, dim - 1)
                    .into_iter()
                    .map(|c| Complex64::new(c, 0.0))
                    .collect()
            }
        };
        factor_amps.push(amps);
    }
    StateVector::product_state(layout, &factor_amps)
}

/// Gaussian wavepacket `exp(-(x-x0)^2/sigma^2) exp(i x p0)` sampled on the
/// interior grid and normalized. Rejects packets whose discrete probability
/// mass on lattice sites outside the box exceeds the model's boundary-mass
/// policy.
fn gaussian_packet(model: &ModelSpec) -> Result<Vec<Complex64>> {
    let grid = model.grid()?;
    let x0 = model.require("x_0", model.x_0)?;
    let sigma = model.require("sigma", model.sigma)?;
    let p0 = model.require("p_0", model.p_0)?;
    let limit = model.resolved_max_boundary_mass();

    let weight = |x: f64| (-2.0 * ((x - x0) / sigma).powi(2)).exp();
    let mut inside = 0.0;
    for j in 0..grid.points {
        inside += weight(grid.x(j));
    }
    // Keep walking the same lattice beyond both walls until the envelope is
    // negligible; the x = 0 and x = L wall sites themselves count as outside.
    let reach = (12.0 * sigma / grid.dx).ceil() as usize;
    let mut outside = 0.0;
    for k in 0..=reach {
        outside += weight(-(k as f64) * grid.dx);
        outside += weight(grid.length + k as f64 * grid.dx);
    }
    let fraction = outside / (inside + outside);
    if fraction > limit {
        return Err(Error::model(format!(
            "wavepacket (x_0 = {x0}, sigma = {sigma}) keeps {fraction:.3e} of its mass outside [0, {}], above the max_boundary_mass policy {limit:.1e}",
            grid.length
        )));
    }

    let mut amps = Vec::with_capacity(grid.points);
    let mut norm_sq = 0.0;
    for j in 0..grid.points {
        let x = grid.x(j);
        let envelope = (-((x - x0) / sigma).powi(2)).exp();
        let phase = Complex64::new(0.0, x * p0).exp();
        let a = envelope * phase;
        norm_sq += a.norm_sqr();
        amps.push(a);
    }
    let norm = norm_sq.sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    Ok(amps)
}
