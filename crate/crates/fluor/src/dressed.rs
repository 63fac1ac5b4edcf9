//! Dressed states of the resonantly pumped two-level system, level tracking
//! as the pump coupling grows, and the conserved excitation parity.
//!
//! The rotating-wave doublets explain the spectra qualitatively: transitions
//! between adjacent doublets produce the central line and the sidebands, and
//! the sideband offsets grow as the square root of the pump occupation. The
//! exact levels are computed here without the rotating-wave approximation, so
//! the closed-form doublets are a small-coupling reference, not the ground
//! truth.

use std::collections::HashMap;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};

use crate::fock::{BasisLayout, Factor, StateVector};
use crate::hamiltonian::{build_two_level_with, Family, ModelSpec};
use crate::sparse::{CsrMatrix, OperatorMatrix};
use crate::{Error, Result};

/// One rung of the dressed-state ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DressedLevel {
    /// The bare ground state with an empty pump mode; nothing to hybridize
    /// with.
    Uncoupled { energy: f64 },
    /// The doublet carrying `n` excitation quanta, split by `2 g sqrt(n)`.
    Doublet { n: usize, lower: f64, upper: f64 },
}

/// Closed-form dressed levels of the resonant two-level system under the
/// rotating-wave approximation: the doublet with `n` quanta sits at
/// `(e1 + e2)/2 + (n - 1/2) omega_a +- g_a sqrt(n)`. Requires the pump tuned
/// to the transition; detuned inputs are rejected rather than silently
/// mislabeled.
pub fn dressed_energies(spec: &ModelSpec, n_max: usize) -> Result<Vec<DressedLevel>> {
    if spec.family != Family::TwoLevel {
        return Err(Error::model("dressed levels are defined for the two-level family"));
    }
    spec.validate()?;
    let e1 = spec.epsilon_1;
    let e2 = spec.require("epsilon_2", spec.epsilon_2)?;
    let omega = spec.require("omega_a", spec.omega_a)?;
    let g = spec.require("g_a", spec.g_a)?;
    let gap = e2 - e1;
    if (gap - omega).abs() > 1e-9 * gap.abs().max(omega.abs()) {
        return Err(Error::model(format!(
            "closed-form dressed levels assume resonance; transition gap {gap} != pump frequency {omega}"
        )));
    }
    let mut levels = Vec::with_capacity(n_max + 1);
    levels.push(DressedLevel::Uncoupled { energy: e1 });
    let centre0 = 0.5 * (e1 + e2);
    for n in 1..=n_max {
        let centre = centre0 + (n as f64 - 0.5) * omega;
        let split = g * (n as f64).sqrt();
        levels.push(DressedLevel::Doublet { n, lower: centre - split, upper: centre + split });
    }
    Ok(levels)
}

/// Exact energy levels followed across a coupling sweep.
#[derive(Debug, Clone)]
pub struct LevelCurves {
    pub g_values: Vec<f64>,
    /// `energies[[k, i]]` is the energy of tracked curve `k` at
    /// `g_values[i]`. Curves are ordered by energy at the first grid point.
    pub energies: Array2<f64>,
    /// Smallest eigenvector overlap used when continuing curves between
    /// neighbouring grid points; near-degenerate crossings push this down.
    pub min_overlap: f64,
    /// Grid indices (from 1) where some continuation overlap fell below 0.5,
    /// meaning the curve identities are not trustworthy from there on.
    pub ambiguous_points: Vec<usize>,
}

/// Diagonalizes the electron + pump block of the two-level model on a grid of
/// pump couplings and connects levels between neighbouring couplings by
/// eigenvector overlap, so curves keep their identity through avoided
/// crossings instead of being re-sorted by energy.
pub fn energy_levels_vs_coupling(spec: &ModelSpec, g_values: &[f64]) -> Result<LevelCurves> {
    if spec.family != Family::TwoLevel {
        return Err(Error::model("level tracking is defined for the two-level family"));
    }
    if g_values.is_empty() {
        return Err(Error::model("coupling grid must not be empty"));
    }
    let mut point = spec.clone();
    point.g_a = Some(g_values[0]);
    point.validate()?;

    let mut energies: Option<Array2<f64>> = None;
    let mut previous: Option<Array2<f64>> = None;
    let mut order: Vec<usize> = Vec::new();
    let mut min_overlap = f64::INFINITY;
    let mut ambiguous_points = Vec::new();

    for (i, &g) in g_values.iter().enumerate() {
        point.g_a = Some(g);
        let h = build_two_level_with(&point, false)?;
        let dim = h.dim();
        let (evals, evecs) = h
            .materialize(0.0)
            .eigh(UPLO::Lower)
            .map_err(|e| Error::model(format!("dense eigensolve failed: {e}")))?;
        let store = energies.get_or_insert_with(|| Array2::zeros((dim, g_values.len())));

        if let Some(prev) = &previous {
            // Greedy continuation: each tracked curve claims the unclaimed
            // new eigenvector it overlaps most.
            let mut claimed = vec![false; dim];
            let mut assignment = vec![0usize; dim];
            let mut worst: f64 = 1.0;
            for k in 0..dim {
                let prev_col = prev.column(order[k]);
                let mut best = (0usize, -1.0f64);
                for c in 0..dim {
                    if claimed[c] {
                        continue;
                    }
                    let overlap = prev_col.dot(&evecs.column(c)).abs();
                    if overlap > best.1 {
                        best = (c, overlap);
                    }
                }
                claimed[best.0] = true;
                assignment[k] = best.0;
                worst = worst.min(best.1);
            }
            min_overlap = min_overlap.min(worst);
            if worst < 0.5 {
                ambiguous_points.push(i);
            }
            order = assignment;
        } else {
            // Eigenvalues from the solver come sorted ascending.
            order = (0..dim).collect();
        }
        for k in 0..dim {
            store[[k, i]] = evals[order[k]];
        }
        previous = Some(evecs);
    }

    Ok(LevelCurves {
        g_values: g_values.to_vec(),
        energies: energies.expect("grid is nonempty"),
        min_overlap: if min_overlap.is_finite() { min_overlap } else { 1.0 },
        ambiguous_points,
    })
}

/// Excitation parity: alternating sign on the electron ladder times photon
/// number parity in each mode. Diagonal in the product basis, squares to the
/// identity, and commutes with every generator built here because each
/// coupling term flips an even number of parity signs.
pub fn parity_operator(layout: &BasisLayout) -> CsrMatrix {
    let dim = layout.total_dim();
    let mut triplets = Vec::with_capacity(dim);
    for flat in 0..dim {
        let mut sign = 1.0f64;
        for (axis, (factor, _)) in layout.factors().iter().enumerate() {
            let index = layout.multi_index(flat)[axis];
            let flips = match factor {
                Factor::Electron | Factor::PumpPhoton | Factor::FluorescencePhoton => index % 2,
                Factor::Position => 0,
            };
            if flips == 1 {
                sign = -sign;
            }
        }
        triplets.push((flat, flat, sign));
    }
    CsrMatrix::from_triplets(dim, &triplets)
}

pub fn parity_expectation(pi: &CsrMatrix, psi: &StateVector) -> f64 {
    pi.expectation(&psi.amplitudes)
}

/// Largest entry of `[H(t), Pi]` in absolute value. Because the parity is
/// diagonal with entries +-1, the commutator entry at `(r, c)` is
/// `H_rc (s_c - s_r)`, so only entries connecting opposite-parity states
/// contribute; same-position entries from different terms are summed before
/// taking the maximum.
pub fn parity_commutator_norm(h: &OperatorMatrix, pi: &CsrMatrix, t: f64) -> f64 {
    let signs: Vec<f64> = (0..h.dim()).map(|i| pi.get(i, i)).collect();
    let mut odd_entries: HashMap<(usize, usize), f64> = HashMap::new();
    let mut accumulate = |matrix: &CsrMatrix, coefficient: f64| {
        for (r, c, v) in matrix.iter_entries() {
            if signs[r] != signs[c] {
                *odd_entries.entry((r, c)).or_insert(0.0) += coefficient * v;
            }
        }
    };
    accumulate(&h.static_part, 1.0);
    for (matrix, envelope) in &h.envelope_terms {
        accumulate(matrix, envelope.value(t));
    }
    odd_entries.values().fold(0.0f64, |acc, v| acc.max(2.0 * v.abs()))
}

/// Energies and parity expectations of all eigenstates of `H(t)`, via dense
/// diagonalization. Exact parity conservation shows up as every expectation
/// sitting at +-1; use on modest dimensions only.
pub fn eigenstate_parities(h: &OperatorMatrix, pi: &CsrMatrix, t: f64) -> Result<Vec<(f64, f64)>> {
    let (evals, evecs) = h
        .materialize(t)
        .eigh(UPLO::Lower)
        .map_err(|e| Error::model(format!("dense eigensolve failed: {e}")))?;
    let signs: Vec<f64> = (0..h.dim()).map(|i| pi.get(i, i)).collect();
    Ok(evals
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let p = evecs.column(k).iter().zip(&signs).map(|(v, s)| s * v * v).sum();
            (e, p)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::initial_state;
    use crate::hamiltonian::test_support::{array_spec, two_level_spec};
    use crate::hamiltonian::{build_array, build_two_level};
    use crate::spectra::linspace;

    fn resonant_spec(g: f64, n_a: usize) -> ModelSpec {
        let mut spec = two_level_spec();
        spec.g_a = Some(g);
        spec.n_a_max = Some(n_a);
        spec.allow_low_cutoff = true;
        spec
    }

    #[test]
    fn weak_coupling_levels_match_the_closed_form_doublets() {
        let g = 1e-3;
        let spec = resonant_spec(g, 6);
        let closed = dressed_energies(&spec, 3).unwrap();
        let curves = energy_levels_vs_coupling(&spec, &[g]).unwrap();
        let numeric: Vec<f64> = curves.energies.column(0).to_vec();
        // Counter-rotating corrections enter at order g^2 / omega = 1e-6.
        let tol = 20.0 * g * g;
        match closed[0] {
            DressedLevel::Uncoupled { energy } => {
                assert!((numeric[0] - energy).abs() < tol, "ground level off");
            }
            _ => panic!("n = 0 must be uncoupled"),
        }
        for n in 1..=3usize {
            let DressedLevel::Doublet { lower, upper, .. } = closed[n] else {
                panic!("n = {n} must be a doublet");
            };
            let lo = numeric[2 * n - 1];
            let hi = numeric[2 * n];
            assert!((lo - lower).abs() < tol, "n = {n}: {lo} vs {lower}");
            assert!((hi - upper).abs() < tol, "n = {n}: {hi} vs {upper}");
        }
    }

    #[test]
    fn detuned_closed_form_is_rejected() {
        let mut spec = resonant_spec(0.1, 6);
        spec.omega_a = Some(0.9);
        let err = dressed_energies(&spec, 3).unwrap_err();
        assert!(format!("{err}").contains("resonance"));
    }

    #[test]
    fn doublet_splitting_scales_with_the_root_of_the_occupation() {
        let spec = resonant_spec(0.05, 10);
        let levels = dressed_energies(&spec, 9).unwrap();
        for n in 1..=9usize {
            let DressedLevel::Doublet { lower, upper, .. } = levels[n] else { unreachable!() };
            assert!((upper - lower - 2.0 * 0.05 * (n as f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn tracked_curves_stay_continuous_across_the_sweep() {
        let spec = resonant_spec(0.0, 8);
        let grid = linspace(0.0, 0.3, 61);
        let curves = energy_levels_vs_coupling(&spec, &grid).unwrap();
        assert!(curves.ambiguous_points.is_empty(), "ambiguous at {:?}", curves.ambiguous_points);
        // At g = 0 each resonant doublet is degenerate and the eigenbasis
        // within the pair is arbitrary, so the first continuation step can
        // only reach 1/sqrt(2).
        assert!(curves.min_overlap > 0.5, "min overlap {}", curves.min_overlap);
        // No curve jumps by more than the local slope allows.
        let dg = grid[1] - grid[0];
        let n_levels = curves.energies.shape()[0];
        for k in 0..n_levels {
            for i in 1..grid.len() {
                let jump = (curves.energies[[k, i]] - curves.energies[[k, i - 1]]).abs();
                assert!(
                    jump < 4.0 * dg * (8.0f64).sqrt() + 1e-9,
                    "curve {k} jumps by {jump} at grid point {i}"
                );
            }
        }
    }

    #[test]
    fn spectrum_is_even_in_the_coupling_sign() {
        let spec = resonant_spec(0.12, 7);
        let plus = energy_levels_vs_coupling(&spec, &[0.12]).unwrap();
        let minus = energy_levels_vs_coupling(&spec, &[-0.12]).unwrap();
        let mut a: Vec<f64> = plus.energies.column(0).to_vec();
        let mut b: Vec<f64> = minus.energies.column(0).to_vec();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn parity_squares_to_the_identity() {
        let spec = two_level_spec();
        let h = build_two_level(&spec).unwrap();
        let pi = parity_operator(&h.layout);
        for i in 0..h.dim() {
            let s = pi.get(i, i);
            assert!(s == 1.0 || s == -1.0);
        }
        assert_eq!(pi.nnz(), h.dim());
    }

    #[test]
    fn parity_commutes_with_two_level_and_array_generators() {
        let spec = two_level_spec();
        let h = build_two_level(&spec).unwrap();
        let pi = parity_operator(&h.layout);
        for t in [0.0, 7.0] {
            let norm = parity_commutator_norm(&h, &pi, t);
            assert!(norm < 1e-12, "two-level commutator {norm} at t = {t}");
        }
        let spec = array_spec(4);
        let h = build_array(&spec).unwrap();
        let pi = parity_operator(&h.layout);
        let norm = parity_commutator_norm(&h, &pi, 3.0);
        assert!(norm < 1e-12, "array commutator {norm}");
    }

    #[test]
    fn commutator_norm_detects_a_parity_breaking_term() {
        use crate::sparse::{kron_triplets, Envelope};
        let spec = two_level_spec();
        let mut h = build_two_level(&spec).unwrap();
        let dims = h.layout.dims();
        // A bare electron flip without any photon change breaks parity.
        let breaker = kron_triplets(&dims, &[(0, &[(0, 1, 0.25), (1, 0, 0.25)])]);
        h.envelope_terms.push((
            CsrMatrix::from_triplets(h.dim(), &breaker),
            Envelope::Constant(1.0),
        ));
        let pi = parity_operator(&h.layout);
        let norm = parity_commutator_norm(&h, &pi, 0.0);
        assert!((norm - 0.5).abs() < 1e-14, "expected 2 * 0.25, got {norm}");
    }

    #[test]
    fn coherent_pump_carries_the_expected_parity_defect() {
        // <(-1)^n> over a coherent state is exp(-2 alpha^2); the electron and
        // probe factors start in their + parity states.
        let spec = two_level_spec();
        let psi = initial_state(&spec).unwrap();
        let pi = parity_operator(&psi.layout);
        let expected = (-2.0f64).exp();
        let got = parity_expectation(&pi, &psi);
        // The default pump cutoff for alpha = 1 leaves a Poisson tail of
        // about 1e-7, which bounds the truncation shift here.
        assert!(
            (got - expected).abs() < 1e-6,
            "parity of the initial state: {got} vs {expected}"
        );
        assert!(got.abs() < 1.0 && got.abs() > 0.0);
    }

    #[test]
    fn eigenstates_carry_sharp_parity_labels() {
        let mut spec = two_level_spec();
        spec.n_a_max = Some(8);
        spec.allow_low_cutoff = true;
        spec.n_b_max = Some(3);
        let h = build_two_level(&spec).unwrap();
        let pi = parity_operator(&h.layout);
        let labels = eigenstate_parities(&h, &pi, 0.5).unwrap();
        for (e, p) in labels {
            assert!(
                (p.abs() - 1.0).abs() < 1e-8,
                "eigenstate at energy {e} has parity {p}"
            );
        }
    }
}
