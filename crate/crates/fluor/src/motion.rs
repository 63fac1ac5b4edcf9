//! Moving-atom pipeline: dense diagonalization of the motional reference
//! generator, first-order fluorescence spectra from its eigenbasis, nuclear
//! densities, the mixed quantum-classical comparison, and the
//! time-energy rescaling map.
//!
//! The first-order spectrum treats the fluorescence coupling as a one-photon
//! perturbation on top of the exactly diagonalized electron + position +
//! pump problem, so one diagonalization serves every probe frequency and
//! observation time. Eigenvector blocks are streamed through BLAS so the
//! coefficient matrices never have to be materialized whole.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{EighInto, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fock::{coherent_normalized, BasisLayout, Factor, StateVector};
use crate::hamiltonian::{build_moving_atom, Family, ModelSpec};
use crate::propagator::{KrylovConfig, Stepper};
use crate::sparse::{
    kron_triplets, ladder_quadrature, number_operator, CsrMatrix, Envelope, OperatorMatrix,
};
use crate::{Error, Result};

/// Hard cap on dense diagonalization, in basis states.
pub const DEFAULT_DIM_CEILING: usize = 12_000;

/// Column block width for streaming the transition matrices through BLAS.
pub const DEFAULT_SPECTRUM_BLOCK: usize = 512;

/// Full symmetric eigendecomposition of a time-independent generator.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub layout: BasisLayout,
    /// Ascending eigenvalues.
    pub energies: Vec<f64>,
    /// Eigenvectors in columns, matching `energies` order.
    pub states: Array2<f64>,
}

impl EigenSystem {
    /// Expansion coefficients of a state in this eigenbasis.
    pub fn expand(&self, psi: &StateVector) -> Result<Vec<Complex64>> {
        if psi.layout != self.layout {
            return Err(Error::model("state layout does not match the eigenbasis layout"));
        }
        let dim = self.energies.len();
        let re = Array1::from_iter(psi.amplitudes.iter().map(|a| a.re));
        let im = Array1::from_iter(psi.amplitudes.iter().map(|a| a.im));
        let cre = self.states.t().dot(&re);
        let cim = self.states.t().dot(&im);
        Ok((0..dim).map(|k| Complex64::new(cre[k], cim[k])).collect())
    }
}

/// Dense eigendecomposition of the static part of `h`. Rejects operators
/// with envelope terms (the result would silently ignore them) and
/// dimensions above `ceiling`.
pub fn diagonalize_static(h: &OperatorMatrix, ceiling: usize) -> Result<EigenSystem> {
    if !h.envelope_terms.is_empty() {
        return Err(Error::model(
            "diagonalization is defined for time-independent generators; this one has envelope terms",
        ));
    }
    let dim = h.dim();
    if dim > ceiling {
        return Err(Error::model(format!(
            "dimension {dim} exceeds the diagonalization ceiling {ceiling}; reduce grid points or photon cutoffs"
        )));
    }
    let dense = h.static_part.to_dense();
    let (evals, evecs) = dense
        .eigh_into(UPLO::Lower)
        .map_err(|e| Error::model(format!("dense eigensolve failed: {e}")))?;
    Ok(EigenSystem { layout: h.layout.clone(), energies: evals.to_vec(), states: evecs })
}

/// Diagonalizes the moving-atom reference generator (no fluorescence
/// factor) at the default ceiling.
pub fn diagonalize_h0(spec: &ModelSpec) -> Result<EigenSystem> {
    if spec.family != Family::MovingAtom {
        return Err(Error::model("the motional reference generator requires the moving-atom family"));
    }
    let h0 = build_moving_atom(spec, false)?;
    diagonalize_static(&h0, DEFAULT_DIM_CEILING)
}

fn sigma_x() -> Vec<(usize, usize, f64)> {
    vec![(0, 1, 1.0), (1, 0, 1.0)]
}

/// Electron flip restricted to a subset of grid points:
/// `sigma_x (x) diag(mask) (x) identity`, scaled by `g`. Without a mask the
/// indicator is the whole axis.
fn masked_transition(layout: &BasisLayout, mask: Option<&[bool]>, g: f64) -> Result<CsrMatrix> {
    let dims = layout.dims();
    let e_axis = layout
        .axis(Factor::Electron)
        .ok_or_else(|| Error::model("layout lacks an electron factor"))?;
    let flip = sigma_x();
    let triplets = match mask {
        Some(mask) => {
            let x_axis = layout
                .axis(Factor::Position)
                .ok_or_else(|| Error::model("layout lacks a position factor"))?;
            if mask.len() != dims[x_axis] {
                return Err(Error::model("indicator length does not match the grid"));
            }
            let indicator: Vec<_> = mask
                .iter()
                .enumerate()
                .filter(|(_, &inside)| inside)
                .map(|(j, _)| (j, j, 1.0))
                .collect();
            kron_triplets(&dims, &[(e_axis, &flip), (x_axis, &indicator)])
        }
        None => kron_triplets(&dims, &[(e_axis, &flip)]),
    };
    let scaled: Vec<_> = triplets.into_iter().map(|(r, c, v)| (r, c, g * v)).collect();
    Ok(CsrMatrix::from_triplets(layout.total_dim(), &scaled))
}

/// One first-order emission channel: the transition operator (coupling
/// strength folded in) and its decay rate.
pub struct FluorescenceChannel {
    pub operator: CsrMatrix,
    pub gamma: f64,
}

/// The two emission channels of the moving-atom model: inside the cavity
/// (`g_1`, `gamma_1`) and its complement (`g_2`, `gamma_2`).
pub fn fluorescence_channels(
    spec: &ModelSpec,
    layout: &BasisLayout,
) -> Result<[FluorescenceChannel; 2]> {
    if spec.family != Family::MovingAtom {
        return Err(Error::model("region channels are defined for the moving-atom family"));
    }
    spec.validate()?;
    let grid = spec.grid()?;
    let x1 = spec.x_1.unwrap();
    let x2 = spec.x_2.unwrap();
    let inside: Vec<bool> = (0..grid.points).map(|j| (x1..=x2).contains(&grid.x(j))).collect();
    let outside: Vec<bool> = inside.iter().map(|b| !b).collect();
    Ok([
        FluorescenceChannel {
            operator: masked_transition(layout, Some(&inside), spec.g_1.unwrap())?,
            gamma: spec.gamma_1.unwrap(),
        },
        FluorescenceChannel {
            operator: masked_transition(layout, Some(&outside), spec.g_2.unwrap())?,
            gamma: spec.gamma_2.unwrap(),
        },
    ])
}

/// A single emission channel for a stationary model without a position
/// factor: the bare electron flip scaled by `g`.
pub fn uniform_channel(layout: &BasisLayout, g: f64, gamma: f64) -> Result<FluorescenceChannel> {
    Ok(FluorescenceChannel { operator: masked_transition(layout, None, g)?, gamma })
}

/// Materialized transition matrices in the eigenbasis,
/// `S^k = g_k <lambda| sigma_x chi_k |lambda'>`, rows and columns in
/// eigenvalue order. Dense `dim x dim` output per channel; use only at CI
/// scales.
pub fn s_coefficients(spec: &ModelSpec, eigen: &EigenSystem) -> Result<(Array2<f64>, Array2<f64>)> {
    let [c1, c2] = fluorescence_channels(spec, &eigen.layout)?;
    Ok((transform_block(eigen, &c1.operator, 0, eigen.energies.len()),
        transform_block(eigen, &c2.operator, 0, eigen.energies.len())))
}

/// Columns `[first, first + width)` of `V^T O V`.
fn transform_block(eigen: &EigenSystem, op: &CsrMatrix, first: usize, width: usize) -> Array2<f64> {
    let dim = eigen.energies.len();
    let mut applied = Array2::<f64>::zeros((dim, width));
    let mut column = vec![0.0f64; dim];
    let mut image = vec![0.0f64; dim];
    for local in 0..width {
        for (dst, src) in column.iter_mut().zip(eigen.states.column(first + local).iter()) {
            *dst = *src;
        }
        image.iter_mut().for_each(|v| *v = 0.0);
        op.apply_add_real(1.0, &column, &mut image);
        applied.column_mut(local).iter_mut().zip(image.iter()).for_each(|(d, s)| *d = *s);
    }
    eigen.states.t().dot(&applied)
}

/// Observation time of the first-order spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationTime {
    Finite(f64),
    /// The long-time limit: decayed numerator terms dropped, overall phases
    /// discarded. Requires strictly positive decay rates.
    Asymptotic,
}

/// First-order fluorescence spectrum on a frequency grid.
#[derive(Debug, Clone)]
pub struct PerturbativeSpectrum {
    pub omega: Vec<f64>,
    pub p: Vec<f64>,
    pub time: ObservationTime,
}

/// Emission probability at each probe frequency, to first order in the
/// fluorescence couplings:
/// `P(t, w) = sum_l |sum_l' [D_1 S^1 + D_2 S^2] <l'|psi0>|^2` with
/// `D_k = (e^{-i(e_l + w)t} - e^{-i e_l' t - G_k t}) / (w + e_l - e_l' + i G_k)`.
/// Near-zero denominators are evaluated through the series of the
/// difference quotient, so the output is continuous across resonances.
/// Transition matrices are computed in column blocks of `block_size` so peak
/// memory stays at `O(dim * block_size)` per channel.
pub fn perturbative_spectrum(
    eigen: &EigenSystem,
    channels: &[FluorescenceChannel],
    psi0: &StateVector,
    omega_grid: &[f64],
    time: ObservationTime,
    block_size: usize,
) -> Result<PerturbativeSpectrum> {
    if channels.is_empty() {
        return Err(Error::model("at least one emission channel is required"));
    }
    if omega_grid.is_empty() {
        return Err(Error::ScanFailure("empty frequency grid".into()));
    }
    if let ObservationTime::Asymptotic = time {
        if channels.iter().any(|c| c.gamma <= 0.0) {
            return Err(Error::model(
                "the long-time limit requires strictly positive decay rates",
            ));
        }
    }
    let dim = eigen.energies.len();
    let c0 = eigen.expand(psi0)?;
    let energies = &eigen.energies;

    // Finite-time ingredients reused across rows: e^{-i e_l' t} and
    // e^{-G_k t}.
    let (phases, decays): (Vec<Complex64>, Vec<f64>) = match time {
        ObservationTime::Finite(t) => (
            energies.iter().map(|&e| Complex64::new(0.0, -e * t).exp()).collect(),
            channels.iter().map(|c| (-c.gamma * t).exp()).collect(),
        ),
        ObservationTime::Asymptotic => (Vec::new(), Vec::new()),
    };

    let mut p = vec![0.0f64; omega_grid.len()];
    let block = block_size.max(1);
    let mut first = 0;
    while first < dim {
        let width = block.min(dim - first);
        // Rows [first, first+width) of each S^k, using the symmetry
        // S = V^T O V = S^T to read rows out of a column block.
        let s_blocks: Vec<Array2<f64>> = channels
            .iter()
            .map(|ch| transform_block(eigen, &ch.operator, first, width))
            .collect();

        let contributions: Vec<Vec<f64>> = (0..width)
            .into_par_iter()
            .map(|local| {
                let row = first + local;
                let eps = energies[row];
                // base_k[l'] = S^k_{row, l'} * c0[l']
                let bases: Vec<Vec<Complex64>> = s_blocks
                    .iter()
                    .map(|sb| {
                        let col = sb.slice(s![.., local]);
                        (0..dim).map(|lp| c0[lp] * col[lp]).collect()
                    })
                    .collect();
                row_spectrum(eps, energies, &bases, channels, omega_grid, time, &phases, &decays)
            })
            .collect();
        for row_p in contributions {
            for (acc, v) in p.iter_mut().zip(row_p) {
                *acc += v;
            }
        }
        first += width;
    }
    Ok(PerturbativeSpectrum { omega: omega_grid.to_vec(), p, time })
}

/// `|amplitude|^2` contribution of one final eigenstate across the frequency
/// grid.
#[allow(clippy::too_many_arguments)]
fn row_spectrum(
    eps: f64,
    energies: &[f64],
    bases: &[Vec<Complex64>],
    channels: &[FluorescenceChannel],
    omega_grid: &[f64],
    time: ObservationTime,
    phases: &[Complex64],
    decays: &[f64],
) -> Vec<f64> {
    let n_omega = omega_grid.len();
    let mut amp = vec![Complex64::new(0.0, 0.0); n_omega];
    match time {
        ObservationTime::Asymptotic => {
            for (lp, &e_lp) in energies.iter().enumerate() {
                let delta = eps - e_lp;
                for (k, channel) in channels.iter().enumerate() {
                    let base = bases[k][lp];
                    if base.re == 0.0 && base.im == 0.0 {
                        continue;
                    }
                    let gamma = channel.gamma;
                    let g2 = gamma * gamma;
                    for (i, &omega) in omega_grid.iter().enumerate() {
                        let dr = omega + delta;
                        let den = dr * dr + g2;
                        // base / (dr + i gamma)
                        amp[i] += base * Complex64::new(dr / den, -gamma / den);
                    }
                }
            }
        }
        ObservationTime::Finite(t) => {
            // Shared unimodular prefactor e^{-i(eps+omega)t} per (row, omega);
            // the modulus drops out of |amp|^2 but the relative phase between
            // the two numerator terms does not.
            let pref: Vec<Complex64> = omega_grid
                .iter()
                .map(|&w| Complex64::new(0.0, (w + eps) * t).exp())
                .collect();
            for (lp, &e_lp) in energies.iter().enumerate() {
                let delta = eps - e_lp;
                for (k, _) in channels.iter().enumerate() {
                    let base = bases[k][lp];
                    if base.re == 0.0 && base.im == 0.0 {
                        continue;
                    }
                    let gamma = channels[k].gamma;
                    let q = phases[lp] * decays[k];
                    for (i, &omega) in omega_grid.iter().enumerate() {
                        let dr = omega + delta;
                        // w = i d t with d = dr + i gamma; |w| small means the
                        // denominator is resonant and the quotient is taken by
                        // series instead.
                        let wt = Complex64::new(-gamma * t, dr * t);
                        let factor = if wt.norm_sqr() < 1e-6 {
                            let phi1 = Complex64::new(1.0, 0.0)
                                + wt * 0.5
                                + wt * wt * (1.0 / 6.0)
                                + wt * wt * wt * (1.0 / 24.0);
                            Complex64::new(0.0, -t) * phi1
                        } else {
                            let d = Complex64::new(dr, gamma);
                            (Complex64::new(1.0, 0.0) - pref[i] * q) / d
                        };
                        amp[i] += base * factor;
                    }
                }
            }
        }
    }
    amp.iter().map(|a| a.norm_sqr()).collect()
}

/// Position marginal divided by the grid spacing, so it integrates to one
/// against `dx`.
pub fn nuclear_density(psi: &StateVector, dx: f64) -> Result<Vec<f64>> {
    if !(dx > 0.0) {
        return Err(Error::model("grid spacing must be positive"));
    }
    Ok(psi.factor_marginal(Factor::Position)?.into_iter().map(|p| p / dx).collect())
}

/// Rescaled model: `H~(t) = Z^-1 H(t/Z)`. Every field with energy dimension
/// (levels, frequencies, couplings, rates) is divided by `Z`, the mass is
/// multiplied by `Z`, and lengths, momenta, and dimensionless fields are
/// unchanged. Propagating the result to time `Z t` reproduces the original
/// state at time `t`.
pub fn rescale(spec: &ModelSpec, z: f64) -> Result<ModelSpec> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::model(format!("scaling parameter must be positive, got {z}")));
    }
    let mut out = spec.clone();
    let scale = |v: &mut Option<f64>| {
        if let Some(x) = v.as_mut() {
            *x /= z;
        }
    };
    out.epsilon_1 /= z;
    scale(&mut out.epsilon_2);
    scale(&mut out.epsilon_3);
    scale(&mut out.omega_s);
    scale(&mut out.omega_a);
    scale(&mut out.omega_b);
    scale(&mut out.g_a);
    scale(&mut out.g_b);
    scale(&mut out.f);
    scale(&mut out.g_1);
    scale(&mut out.g_2);
    scale(&mut out.gamma);
    scale(&mut out.gamma_1);
    scale(&mut out.gamma_2);
    if let Some(m) = out.mass.as_mut() {
        *m *= z;
    }
    Ok(out)
}

/// Pump coupling profile at a continuous position: a half-sine arch over the
/// cavity, zero outside.
pub fn pump_profile(spec: &ModelSpec, x: f64) -> f64 {
    let (x1, x2) = (spec.x_1.unwrap(), spec.x_2.unwrap());
    if (x1..=x2).contains(&x) {
        spec.g_a.unwrap() * (std::f64::consts::PI * (x - x1) / (x2 - x1)).sin()
    } else {
        0.0
    }
}

fn pump_profile_slope(spec: &ModelSpec, x: f64) -> f64 {
    let (x1, x2) = (spec.x_1.unwrap(), spec.x_2.unwrap());
    if (x1..=x2).contains(&x) {
        let l = x2 - x1;
        spec.g_a.unwrap() * std::f64::consts::PI / l * (std::f64::consts::PI * (x - x1) / l).cos()
    } else {
        0.0
    }
}

/// Mixed quantum-classical integration parameters.
#[derive(Debug, Clone, Copy)]
pub struct EhrenfestConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Record a snapshot every this many steps (the initial point is always
    /// recorded).
    pub record_stride: usize,
    pub krylov: KrylovConfig,
}

impl Default for EhrenfestConfig {
    fn default() -> Self {
        EhrenfestConfig {
            dt: 1.0,
            t_max: 3.0e5,
            record_stride: 50,
            krylov: KrylovConfig::default(),
        }
    }
}

/// One recorded snapshot of the mixed evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhrenfestPoint {
    pub t: f64,
    pub x: f64,
    pub p: f64,
    /// Classical kinetic energy plus the quantum expectation of the frozen
    /// generator.
    pub energy: f64,
    pub force: f64,
    /// Probability of at least one fluorescence photon.
    pub fluorescence: f64,
}

/// Output of [`ehrenfest_evolve`].
#[derive(Debug, Clone)]
pub struct EhrenfestTrajectory {
    pub points: Vec<EhrenfestPoint>,
    /// First time the classical position exceeded the far cavity wall; sets
    /// the switch time of the outside-emission envelope.
    pub crossing_time: Option<f64>,
    /// Time the atom left the box, if it did; the run stops there.
    pub box_exit_time: Option<f64>,
    pub final_state: StateVector,
}

/// Velocity-Verlet evolution of the classical position and momentum, with
/// the electron + pump + fluorescence subsystem propagated under couplings
/// frozen at the step midpoint. The force is the quantum expectation of the
/// negative coupling gradient; the piecewise fluorescence envelope
/// contributes no gradient away from the region edges and its edge
/// discontinuity is not given a delta-force term. Outside-region emission
/// decays from the wall-crossing time once the atom has passed the cavity;
/// before any crossing the outside coupling is taken undecayed.
pub fn ehrenfest_evolve(spec: &ModelSpec, cfg: &EhrenfestConfig) -> Result<EhrenfestTrajectory> {
    if spec.family != Family::MovingAtom {
        return Err(Error::model("the mixed comparison is defined for the moving-atom family"));
    }
    spec.validate()?;
    if !(cfg.dt > 0.0) || !(cfg.t_max > 0.0) || cfg.record_stride == 0 {
        return Err(Error::model("step, horizon, and record stride must be positive"));
    }
    let mass = spec.mass.unwrap();
    let length = spec.box_length.unwrap();
    let x2 = spec.x_2.unwrap();
    let omega_b = spec.require("omega_b", spec.omega_b)?;
    let gap = spec.epsilon_gap()?;
    let omega_a = spec.omega_a.unwrap();
    let n_a = spec.resolved_n_a_max()?;
    let n_b = spec.resolved_n_b_max();
    let (g1, g2) = (spec.g_1.unwrap(), spec.g_2.unwrap());
    let gamma = spec.gamma_2.unwrap();

    let layout = BasisLayout::new(vec![
        (Factor::Electron, 2),
        (Factor::PumpPhoton, n_a + 1),
        (Factor::FluorescencePhoton, n_b + 1),
    ])?;
    let dims = layout.dims();
    let dim = layout.total_dim();
    let mut static_trips = kron_triplets(&dims, &[(0, &[(1, 1, gap)])]);
    static_trips.extend(kron_triplets(
        &dims,
        &[(1, &scaled_entries(&number_operator(dims[1]), omega_a))],
    ));
    static_trips.extend(kron_triplets(
        &dims,
        &[(2, &scaled_entries(&number_operator(dims[2]), omega_b))],
    ));
    let pump_coupling = CsrMatrix::from_triplets(
        dim,
        &kron_triplets(&dims, &[(0, &sigma_x()), (1, &ladder_quadrature(dims[1]))]),
    );
    let fluor_coupling = CsrMatrix::from_triplets(
        dim,
        &kron_triplets(&dims, &[(0, &sigma_x()), (2, &ladder_quadrature(dims[2]))]),
    );
    let mut h = OperatorMatrix {
        layout: layout.clone(),
        static_part: CsrMatrix::from_triplets(dim, &static_trips),
        envelope_terms: vec![
            (pump_coupling.clone(), Envelope::Constant(0.0)),
            (fluor_coupling.clone(), Envelope::Constant(0.0)),
        ],
    };

    let alpha = spec.alpha.unwrap();
    let ground: Vec<Complex64> = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let pump: Vec<Complex64> = coherent_normalized(alpha, n_a)
        .into_iter()
        .map(|c| Complex64::new(c, 0.0))
        .collect();
    let mut vacuum = vec![Complex64::new(0.0, 0.0); n_b + 1];
    vacuum[0] = Complex64::new(1.0, 0.0);
    let mut psi = StateVector::product_state(layout.clone(), &[ground, pump, vacuum])?;

    let mut x = spec.x_0.unwrap();
    let mut p = spec.p_0.unwrap();
    let mut t = 0.0f64;
    let mut crossing_time: Option<f64> = None;
    let mut box_exit_time: Option<f64> = None;

    let fluor_coefficient = |x: f64, t: f64, crossing: Option<f64>| -> f64 {
        let x1 = spec.x_1.unwrap();
        if (x1..=x2).contains(&x) {
            g1
        } else {
            match crossing {
                Some(t0) => g2 * (-gamma * (t - t0)).exp(),
                None => g2,
            }
        }
    };
    let force =
        |x: f64, psi: &StateVector| -> f64 { -pump_profile_slope(spec, x) * pump_coupling.expectation(&psi.amplitudes) };

    let mut points = Vec::new();
    let record = |points: &mut Vec<EhrenfestPoint>,
                  t: f64,
                  x: f64,
                  p: f64,
                  f: f64,
                  psi: &StateVector,
                  h: &OperatorMatrix,
                  ga: f64,
                  gb: f64|
     -> Result<()> {
        let quantum = h.static_part.expectation(&psi.amplitudes)
            + ga * pump_coupling.expectation(&psi.amplitudes)
            + gb * fluor_coupling.expectation(&psi.amplitudes);
        let marginal = psi.factor_marginal(Factor::FluorescencePhoton)?;
        points.push(EhrenfestPoint {
            t,
            x,
            p,
            energy: p * p / (2.0 * mass) + quantum,
            force: f,
            fluorescence: 1.0 - marginal[0],
        });
        Ok(())
    };

    let mut f = force(x, &psi);
    record(
        &mut points,
        t,
        x,
        p,
        f,
        &psi,
        &h,
        pump_profile(spec, x),
        fluor_coefficient(x, t, crossing_time),
    )?;

    let steps = (cfg.t_max / cfg.dt).ceil() as u64;
    for step in 1..=steps {
        let p_half = p + 0.5 * cfg.dt * f;
        let x_new = x + cfg.dt * p_half / mass;
        let x_mid = 0.5 * (x + x_new);
        let t_mid = t + 0.5 * cfg.dt;
        h.envelope_terms[0].1 = Envelope::Constant(pump_profile(spec, x_mid));
        h.envelope_terms[1].1 =
            Envelope::Constant(fluor_coefficient(x_mid, t_mid, crossing_time));
        let mut stepper = Stepper::new(&h, cfg.krylov)?;
        stepper.step(&mut psi.amplitudes, 0.0, cfg.dt)?;

        let t_new = t + cfg.dt;
        if crossing_time.is_none() && x <= x2 && x_new > x2 {
            let frac = (x2 - x) / (x_new - x);
            crossing_time = Some(t + frac * cfg.dt);
        }
        f = force(x_new, &psi);
        p = p_half + 0.5 * cfg.dt * f;
        x = x_new;
        t = t_new;

        let exited = !(0.0..=length).contains(&x);
        if step % cfg.record_stride as u64 == 0 || exited || step == steps {
            record(
                &mut points,
                t,
                x,
                p,
                f,
                &psi,
                &h,
                pump_profile(spec, x),
                fluor_coefficient(x, t, crossing_time),
            )?;
        }
        if exited {
            box_exit_time = Some(t);
            break;
        }
    }
    Ok(EhrenfestTrajectory { points, crossing_time, box_exit_time, final_state: psi })
}

fn scaled_entries(entries: &[(usize, usize, f64)], s: f64) -> Vec<(usize, usize, f64)> {
    entries.iter().map(|&(r, c, v)| (r, c, s * v)).collect()
}
