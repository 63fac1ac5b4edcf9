//! Model declarations and sparse Hamiltonian builders for every family:
//! two-level, three-level (two coupling scenarios), collective atom array,
//! moving atom on a grid, classically driven two-level, and the
//! rotating-wave effective two-level control model.
//!
//! All builders return an [`OperatorMatrix`] whose static part and envelope
//! matrices are exactly symmetric by construction. Couplings to radiation
//! never drop counter-rotating terms, except in [`build_rwa_aea`] where their
//! absence is the point of the model.

use serde::{Deserialize, Serialize};

use crate::fock::{build_basis_with, CoherentSpec, Factor};
use crate::sparse::{
    kron_triplets, ladder_quadrature, number_operator, CsrMatrix, Envelope, OperatorMatrix,
};
use crate::{Error, Result};

/// Model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    TwoLevel,
    ThreeLevelV1,
    ThreeLevelV2,
    Array,
    MovingAtom,
    Semiclassical,
    RwaAea,
}

/// Unit system declaration. Static models use the level splitting as the
/// energy unit; moving-atom models run in Hartree atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    #[default]
    Epsilon,
    Atomic,
}

/// Uniform interior grid of a hard-wall box `[0, L]`: points sit at
/// `x_j = (j+1) dx` with `dx = L/(points+1)`, excluding both walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub points: usize,
    pub dx: f64,
    pub length: f64,
}

impl Grid {
    pub fn x(&self, j: usize) -> f64 {
        (j + 1) as f64 * self.dx
    }
}

/// Declarative description of one model instance. Fields irrelevant to the
/// chosen family stay unset; [`ModelSpec::validate`] enforces per-family
/// requirements with messages that name the offending field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub units: Units,
    /// Ground-level energy; zero unless stated otherwise.
    #[serde(default)]
    pub epsilon_1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_3: Option<f64>,
    /// Level spacing of the array family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_b: Option<f64>,
    /// Pump coupling on the 1-2 and 2-3 transitions of the three-level
    /// families, and the two-photon coupling of the rotating-wave model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_a_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_b_max: Option<usize>,
    /// Accept pump cutoffs below the tail-mass rule (reduced-cost runs).
    #[serde(default)]
    pub allow_low_cutoff: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Fluorescence coupling inside the cavity (moving atom).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_1: Option<f64>,
    /// Fluorescence coupling outside the cavity (moving atom).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_0: Option<f64>,
    /// Largest tolerated wavepacket probability mass outside the box
    /// (default 2e-2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_boundary_mass: Option<f64>,
}

impl ModelSpec {
    /// Blank spec for the given family; callers fill in the fields their
    /// family requires.
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            units: Units::default(),
            epsilon_1: 0.0,
            epsilon_2: None,
            epsilon_3: None,
            omega_s: None,
            omega_a: None,
            omega_b: None,
            g_a: None,
            g_b: None,
            f: None,
            gamma: None,
            gamma_1: None,
            gamma_2: None,
            alpha: None,
            n_a_max: None,
            n_b_max: None,
            allow_low_cutoff: false,
            n_atoms: None,
            mass: None,
            box_length: None,
            x_1: None,
            x_2: None,
            grid_points: None,
            g_1: None,
            g_2: None,
            x_0: None,
            sigma: None,
            p_0: None,
            max_boundary_mass: None,
        }
    }

    pub(crate) fn require(&self, name: &str, value: Option<f64>) -> Result<f64> {
        value.ok_or_else(|| {
            Error::model(format!("field `{name}` is required for family {:?}", self.family))
        })
    }

    fn require_nonnegative(&self, name: &str, value: Option<f64>) -> Result<f64> {
        let v = self.require(name, value)?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::model(format!("field `{name}` must be finite and nonnegative, got {v}")));
        }
        Ok(v)
    }

    fn require_positive(&self, name: &str, value: Option<f64>) -> Result<f64> {
        let v = self.require(name, value)?;
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::model(format!("field `{name}` must be finite and positive, got {v}")));
        }
        Ok(v)
    }

    /// Electronic factor dimension (collective-spin dimension for arrays).
    pub fn electron_dim(&self) -> Result<usize> {
        Ok(match self.family {
            Family::TwoLevel | Family::MovingAtom | Family::Semiclassical | Family::RwaAea => 2,
            Family::ThreeLevelV1 | Family::ThreeLevelV2 => 3,
            Family::Array => {
                let n = self.n_atoms.ok_or_else(|| {
                    Error::model("field `n_atoms` is required for family Array")
                })?;
                if n == 0 {
                    return Err(Error::model("field `n_atoms` must be at least 1"));
                }
                n + 1
            }
        })
    }

    /// Pump cutoff: explicit value, or the tail-mass rule applied to alpha.
    /// Explicit values below the rule are rejected unless `allow_low_cutoff`.
    pub fn resolved_n_a_max(&self) -> Result<usize> {
        let alpha = self.require("alpha", self.alpha)?;
        let rule = CoherentSpec::minimum_cutoff(alpha);
        match self.n_a_max {
            None => Ok(rule),
            Some(n) if n >= rule || self.allow_low_cutoff => Ok(n),
            Some(n) => Err(Error::model(format!(
                "n_a_max = {n} is below the tail-mass cutoff {rule} for alpha = {alpha}; set allow_low_cutoff to accept truncation error"
            ))),
        }
    }

    /// Fluorescence cutoff; the weak, damped fluorescence mode saturates well
    /// below ten photons in every configuration treated here.
    pub fn resolved_n_b_max(&self) -> usize {
        self.n_b_max.unwrap_or(10)
    }

    pub fn resolved_max_boundary_mass(&self) -> f64 {
        self.max_boundary_mass.unwrap_or(2e-2)
    }

    /// Spatial grid of a moving-atom model.
    pub fn grid(&self) -> Result<Grid> {
        let length = self.require_positive("box_length", self.box_length)?;
        let points = self
            .grid_points
            .ok_or_else(|| Error::model("field `grid_points` is required for family MovingAtom"))?;
        if points < 3 {
            return Err(Error::model(format!("grid_points = {points} is too small; need at least 3")));
        }
        Ok(Grid { points, dx: length / (points + 1) as f64, length })
    }

    /// Level splitting `epsilon_2 - epsilon_1`.
    pub fn epsilon_gap(&self) -> Result<f64> {
        Ok(self.require("epsilon_2", self.epsilon_2)? - self.epsilon_1)
    }

    /// Reduction of a two-level model to its classically driven limit: the
    /// pump mode is replaced by the drive `2 g_a alpha cos(omega_a t)`, all
    /// other parameters carried over.
    pub fn semiclassical_reduction(&self) -> Result<ModelSpec> {
        if self.family != Family::TwoLevel {
            return Err(Error::model(format!(
                "semiclassical reduction applies to the TwoLevel family, not {:?}",
                self.family
            )));
        }
        let mut reduced = self.clone();
        reduced.family = Family::Semiclassical;
        reduced.n_a_max = None;
        Ok(reduced)
    }

    /// Per-family completeness and sign checks. Messages name the offending
    /// field and the violated rule.
    pub fn validate(&self) -> Result<()> {
        // Coupling signs are a phase convention and may be negative; decay
        // rates may not.
        for (name, value) in [
            ("g_a", self.g_a),
            ("g_b", self.g_b),
            ("f", self.f),
            ("g_1", self.g_1),
            ("g_2", self.g_2),
        ] {
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(Error::model(format!("field `{name}` must be finite, got {v}")));
                }
            }
        }
        for (name, value) in
            [("gamma", self.gamma), ("gamma_1", self.gamma_1), ("gamma_2", self.gamma_2)]
        {
            if let Some(v) = value {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::model(format!(
                        "field `{name}` must be finite and nonnegative, got {v}"
                    )));
                }
            }
        }
        match self.family {
            Family::MovingAtom => {
                if self.units != Units::Atomic {
                    return Err(Error::model(
                        "field `units` must be \"atomic\" for family MovingAtom",
                    ));
                }
            }
            _ => {
                if self.units != Units::Epsilon {
                    return Err(Error::model(format!(
                        "field `units` must be \"epsilon\" for family {:?}",
                        self.family
                    )));
                }
            }
        }
        match self.family {
            Family::TwoLevel | Family::Semiclassical => {
                self.require("epsilon_2", self.epsilon_2)?;
                self.require("omega_a", self.omega_a)?;
                self.require("omega_b", self.omega_b)?;
                self.require("g_a", self.g_a)?;
                self.require("g_b", self.g_b)?;
                self.require_nonnegative("gamma", self.gamma)?;
                self.require("alpha", self.alpha)?;
            }
            Family::ThreeLevelV1 | Family::ThreeLevelV2 => {
                self.require("epsilon_2", self.epsilon_2)?;
                self.require("epsilon_3", self.epsilon_3)?;
                self.require("omega_a", self.omega_a)?;
                self.require("omega_b", self.omega_b)?;
                self.require("f", self.f)?;
                self.require("g_b", self.g_b)?;
                self.require_nonnegative("gamma", self.gamma)?;
                self.require("alpha", self.alpha)?;
                if self.family == Family::ThreeLevelV2 {
                    self.require("g_a", self.g_a)?;
                }
            }
            Family::RwaAea => {
                self.require("epsilon_3", self.epsilon_3)?;
                self.require("omega_a", self.omega_a)?;
                self.require("omega_b", self.omega_b)?;
                self.require("f", self.f)?;
                self.require("g_b", self.g_b)?;
                self.require_nonnegative("gamma", self.gamma)?;
                self.require("alpha", self.alpha)?;
            }
            Family::Array => {
                self.require_positive("omega_s", self.omega_s)?;
                self.require_positive("omega_a", self.omega_a)?;
                self.require_positive("omega_b", self.omega_b)?;
                self.require("g_a", self.g_a)?;
                self.require("g_b", self.g_b)?;
                self.require_nonnegative("gamma", self.gamma)?;
                self.require("alpha", self.alpha)?;
                self.electron_dim()?;
            }
            Family::MovingAtom => {
                self.require("epsilon_2", self.epsilon_2)?;
                self.require_positive("omega_a", self.omega_a)?;
                self.require_positive("mass", self.mass)?;
                self.require("g_a", self.g_a)?;
                self.require("g_1", self.g_1)?;
                self.require("g_2", self.g_2)?;
                self.require_nonnegative("gamma_1", self.gamma_1)?;
                self.require_nonnegative("gamma_2", self.gamma_2)?;
                self.require("alpha", self.alpha)?;
                self.require("x_0", self.x_0)?;
                self.require_positive("sigma", self.sigma)?;
                self.require("p_0", self.p_0)?;
                let grid = self.grid()?;
                let x1 = self.require("x_1", self.x_1)?;
                let x2 = self.require("x_2", self.x_2)?;
                if !(0.0 < x1 && x1 < x2 && x2 < grid.length) {
                    return Err(Error::model(format!(
                        "cavity walls must satisfy 0 < x_1 < x_2 < box_length, got x_1 = {x1}, x_2 = {x2}, box_length = {}",
                        grid.length
                    )));
                }
            }
        }
        if self.family != Family::Semiclassical {
            self.resolved_n_a_max()?;
        }
        Ok(())
    }
}

/// `|i><j| + |j><i|` on a local factor.
fn cross_coupling(i: usize, j: usize) -> [(usize, usize, f64); 2] {
    [(i, j, 1.0), (j, i, 1.0)]
}

fn scaled(entries: &[(usize, usize, f64)], s: f64) -> Vec<(usize, usize, f64)> {
    entries.iter().map(|&(r, c, v)| (r, c, s * v)).collect()
}

/// Collective-spin `S_z` for `n` spin-halves in the maximal-spin sector:
/// diagonal `m = j - n/2` at index `j` (0 = all ground).
fn spin_z(n: usize) -> Vec<(usize, usize, f64)> {
    let s = n as f64 / 2.0;
    (0..=n).filter(|&j| j as f64 != s).map(|j| (j, j, j as f64 - s)).collect()
}

/// Collective transverse coupling: the sum of single-atom level-swap
/// operators, with elements `sqrt(S(S+1) - m(m+1))` linking `m` and `m+1`.
/// For one atom this reduces to the two-level swap with unit elements.
fn spin_x(n: usize) -> Vec<(usize, usize, f64)> {
    let s = n as f64 / 2.0;
    let mut out = Vec::with_capacity(2 * n);
    for j in 0..n {
        let m = j as f64 - s;
        let v = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
        out.push((j, j + 1, v));
        out.push((j + 1, j, v));
    }
    out
}

/// Driven two-level atom with quantized pump and fluorescence modes; the
/// fluorescence coupling decays at rate `gamma`. When the layout lacks the
/// fluorescence factor (spectrum-free diagnostics) those terms are dropped.
pub fn build_two_level(spec: &ModelSpec) -> Result<OperatorMatrix> {
    build_two_level_with(spec, true)
}

pub fn build_two_level_with(spec: &ModelSpec, include_fluorescence: bool) -> Result<OperatorMatrix> {
    if spec.family != Family::TwoLevel {
        return Err(Error::model(format!("build_two_level expects family TwoLevel, got {:?}", spec.family)));
    }
    let layout = build_basis_with(spec, include_fluorescence)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let a = layout.axis(Factor::PumpPhoton).unwrap();
    let n_a_dim = dims[a];

    let mut static_trips = Vec::new();
    let level_diag = [(0, 0, spec.epsilon_1), (1, 1, spec.epsilon_2.unwrap())];
    static_trips.extend(kron_triplets(&dims, &[(e, &level_diag)]));
    static_trips.extend(kron_triplets(&dims, &[(a, &scaled(&number_operator(n_a_dim), spec.omega_a.unwrap()))]));
    static_trips.extend(kron_triplets(
        &dims,
        &[(e, &cross_coupling(0, 1)), (a, &scaled(&ladder_quadrature(n_a_dim), spec.g_a.unwrap()))],
    ));

    let mut envelope_terms = Vec::new();
    if let Some(b) = layout.axis(Factor::FluorescencePhoton) {
        let n_b_dim = dims[b];
        static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(n_b_dim), spec.omega_b.unwrap()))]));
        let fluor = kron_triplets(&dims, &[(e, &cross_coupling(0, 1)), (b, &ladder_quadrature(n_b_dim))]);
        envelope_terms.push((
            CsrMatrix::from_triplets(layout.total_dim(), &fluor),
            Envelope::ExpDecay { amplitude: spec.g_b.unwrap(), rate: spec.gamma.unwrap() },
        ));
    }

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Three-level atom: the pump couples the 1-2 and 2-3 transitions with
/// strength `f`; the decaying fluorescence mode couples 1-3. The second
/// scenario adds a direct pump coupling `g_a` on 1-3.
pub fn build_three_level(spec: &ModelSpec) -> Result<OperatorMatrix> {
    let with_direct = match spec.family {
        Family::ThreeLevelV1 => false,
        Family::ThreeLevelV2 => true,
        other => {
            return Err(Error::model(format!(
                "build_three_level expects family ThreeLevelV1 or ThreeLevelV2, got {other:?}"
            )))
        }
    };
    let layout = build_basis_with(spec, true)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let a = layout.axis(Factor::PumpPhoton).unwrap();
    let b = layout.axis(Factor::FluorescencePhoton).unwrap();
    let quad_a = ladder_quadrature(dims[a]);

    let mut static_trips = Vec::new();
    let level_diag = [
        (0, 0, spec.epsilon_1),
        (1, 1, spec.epsilon_2.unwrap()),
        (2, 2, spec.epsilon_3.unwrap()),
    ];
    static_trips.extend(kron_triplets(&dims, &[(e, &level_diag)]));
    static_trips.extend(kron_triplets(&dims, &[(a, &scaled(&number_operator(dims[a]), spec.omega_a.unwrap()))]));
    static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(dims[b]), spec.omega_b.unwrap()))]));
    let f = spec.f.unwrap();
    static_trips.extend(kron_triplets(&dims, &[(e, &cross_coupling(0, 1)), (a, &scaled(&quad_a, f))]));
    static_trips.extend(kron_triplets(&dims, &[(e, &cross_coupling(1, 2)), (a, &scaled(&quad_a, f))]));
    if with_direct {
        static_trips.extend(kron_triplets(
            &dims,
            &[(e, &cross_coupling(0, 2)), (a, &scaled(&quad_a, spec.g_a.unwrap()))],
        ));
    }

    let fluor = kron_triplets(&dims, &[(e, &cross_coupling(0, 2)), (b, &ladder_quadrature(dims[b]))]);
    let envelope_terms = vec![(
        CsrMatrix::from_triplets(layout.total_dim(), &fluor),
        Envelope::ExpDecay { amplitude: spec.g_b.unwrap(), rate: spec.gamma.unwrap() },
    )];

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Identical atoms coupled to common pump and fluorescence modes, built in
/// the maximal collective-spin sector (dimension `n_atoms + 1`), which the
/// all-ground initial state never leaves.
pub fn build_array(spec: &ModelSpec) -> Result<OperatorMatrix> {
    if spec.family != Family::Array {
        return Err(Error::model(format!("build_array expects family Array, got {:?}", spec.family)));
    }
    let layout = build_basis_with(spec, true)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let a = layout.axis(Factor::PumpPhoton).unwrap();
    let b = layout.axis(Factor::FluorescencePhoton).unwrap();
    let n = spec.n_atoms.unwrap();
    let sx = spin_x(n);

    let mut static_trips = Vec::new();
    static_trips.extend(kron_triplets(&dims, &[(e, &scaled(&spin_z(n), spec.omega_s.unwrap()))]));
    static_trips.extend(kron_triplets(&dims, &[(a, &scaled(&number_operator(dims[a]), spec.omega_a.unwrap()))]));
    static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(dims[b]), spec.omega_b.unwrap()))]));
    static_trips.extend(kron_triplets(
        &dims,
        &[(e, &sx), (a, &scaled(&ladder_quadrature(dims[a]), spec.g_a.unwrap()))],
    ));

    let fluor = kron_triplets(&dims, &[(e, &sx), (b, &ladder_quadrature(dims[b]))]);
    let envelope_terms = vec![(
        CsrMatrix::from_triplets(layout.total_dim(), &fluor),
        Envelope::ExpDecay { amplitude: spec.g_b.unwrap(), rate: spec.gamma.unwrap() },
    )];

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Two-level atom moving through a cavity: second-order central-difference
/// kinetic term with hard walls, a half-sine pump coupling profile supported
/// on `[x_1, x_2]`, and (optionally) decaying fluorescence couplings `g_1`
/// inside and `g_2` outside the cavity. Without the fluorescence factor this
/// is the reference Hamiltonian whose eigenbasis drives the perturbative
/// spectrum.
pub fn build_moving_atom(spec: &ModelSpec, include_fluorescence: bool) -> Result<OperatorMatrix> {
    if spec.family != Family::MovingAtom {
        return Err(Error::model(format!("build_moving_atom expects family MovingAtom, got {:?}", spec.family)));
    }
    let layout = build_basis_with(spec, include_fluorescence)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let x = layout.axis(Factor::Position).unwrap();
    let a = layout.axis(Factor::PumpPhoton).unwrap();
    let grid = spec.grid()?;
    let x1 = spec.x_1.unwrap();
    let x2 = spec.x_2.unwrap();
    let cavity_width = x2 - x1;

    let in_cavity = |pos: f64| pos >= x1 && pos <= x2;
    let cavity_points = (0..grid.points).filter(|&j| in_cavity(grid.x(j))).count();
    if cavity_points < 10 {
        return Err(Error::model(format!(
            "cavity [x_1, x_2] covers only {cavity_points} grid points; need at least 10 (raise grid_points)"
        )));
    }

    // p^2/2M with Dirichlet walls: tridiagonal (-1, 2, -1)/(2M dx^2).
    let k = 1.0 / (2.0 * spec.mass.unwrap() * grid.dx * grid.dx);
    let mut kinetic = Vec::with_capacity(3 * grid.points);
    for j in 0..grid.points {
        kinetic.push((j, j, 2.0 * k));
        if j + 1 < grid.points {
            kinetic.push((j, j + 1, -k));
            kinetic.push((j + 1, j, -k));
        }
    }

    let mut static_trips = Vec::new();
    static_trips.extend(kron_triplets(&dims, &[(x, &kinetic)]));
    let level_diag = [(0, 0, spec.epsilon_1), (1, 1, spec.epsilon_2.unwrap())];
    static_trips.extend(kron_triplets(&dims, &[(e, &level_diag)]));
    static_trips.extend(kron_triplets(&dims, &[(a, &scaled(&number_operator(dims[a]), spec.omega_a.unwrap()))]));

    // Pump profile g_a sin(pi (x - x_1)/(x_2 - x_1)) inside the cavity.
    let g_a = spec.g_a.unwrap();
    let mut profile = Vec::new();
    for j in 0..grid.points {
        let pos = grid.x(j);
        if in_cavity(pos) {
            let v = g_a * (std::f64::consts::PI * (pos - x1) / cavity_width).sin();
            if v != 0.0 {
                profile.push((j, j, v));
            }
        }
    }
    static_trips.extend(kron_triplets(
        &dims,
        &[(e, &cross_coupling(0, 1)), (x, &profile), (a, &ladder_quadrature(dims[a]))],
    ));

    let mut envelope_terms = Vec::new();
    if let Some(b) = layout.axis(Factor::FluorescencePhoton) {
        let omega_b = spec.require("omega_b", spec.omega_b)?;
        static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(dims[b]), omega_b))]));
        let quad_b = ladder_quadrature(dims[b]);
        let chi_in: Vec<_> = (0..grid.points).filter(|&j| in_cavity(grid.x(j))).map(|j| (j, j, 1.0)).collect();
        let chi_out: Vec<_> = (0..grid.points).filter(|&j| !in_cavity(grid.x(j))).map(|j| (j, j, 1.0)).collect();
        for (chi, g, rate) in [
            (chi_in, spec.g_1.unwrap(), spec.gamma_1.unwrap()),
            (chi_out, spec.g_2.unwrap(), spec.gamma_2.unwrap()),
        ] {
            let trips = kron_triplets(&dims, &[(e, &cross_coupling(0, 1)), (x, &chi), (b, &quad_b)]);
            envelope_terms.push((
                CsrMatrix::from_triplets(layout.total_dim(), &trips),
                Envelope::ExpDecay { amplitude: g, rate },
            ));
        }
    }

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Two-level atom under a classical drive `2 g_a alpha cos(omega_a t)` with a
/// quantized, decaying fluorescence mode. The pump-photon factor is absent;
/// only the product `g_a alpha` enters the dynamics.
pub fn build_semiclassical(spec: &ModelSpec) -> Result<OperatorMatrix> {
    if spec.family != Family::Semiclassical {
        return Err(Error::model(format!("build_semiclassical expects family Semiclassical, got {:?}", spec.family)));
    }
    let layout = build_basis_with(spec, true)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let b = layout.axis(Factor::FluorescencePhoton).unwrap();

    let mut static_trips = Vec::new();
    let level_diag = [(0, 0, spec.epsilon_1), (1, 1, spec.epsilon_2.unwrap())];
    static_trips.extend(kron_triplets(&dims, &[(e, &level_diag)]));
    static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(dims[b]), spec.omega_b.unwrap()))]));

    let drive = kron_triplets(&dims, &[(e, &cross_coupling(0, 1))]);
    let fluor = kron_triplets(&dims, &[(e, &cross_coupling(0, 1)), (b, &ladder_quadrature(dims[b]))]);
    let envelope_terms = vec![
        (
            CsrMatrix::from_triplets(layout.total_dim(), &drive),
            Envelope::Cosine {
                amplitude: 2.0 * spec.g_a.unwrap() * spec.alpha.unwrap(),
                omega: spec.omega_a.unwrap(),
            },
        ),
        (
            CsrMatrix::from_triplets(layout.total_dim(), &fluor),
            Envelope::ExpDecay { amplitude: spec.g_b.unwrap(), rate: spec.gamma.unwrap() },
        ),
    ];

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Effective two-level model after rotating-wave treatment of both fields
/// and adiabatic elimination of the intermediate level: a two-photon pump
/// coupling `f a^2` and a single-photon fluorescence coupling on the 1-3
/// transition, with no counter-rotating terms. Level indices 0 and 1 stand
/// for levels 1 and 3 at energies -(e3-e1)/2 and +(e3-e1)/2.
pub fn build_rwa_aea(spec: &ModelSpec) -> Result<OperatorMatrix> {
    if spec.family != Family::RwaAea {
        return Err(Error::model(format!("build_rwa_aea expects family RwaAea, got {:?}", spec.family)));
    }
    let layout = build_basis_with(spec, true)?;
    let dims = layout.dims();
    let e = layout.axis(Factor::Electron).unwrap();
    let a = layout.axis(Factor::PumpPhoton).unwrap();
    let b = layout.axis(Factor::FluorescencePhoton).unwrap();
    let gap = spec.epsilon_3.unwrap() - spec.epsilon_1;

    let mut static_trips = Vec::new();
    let level_diag = [(0, 0, -gap / 2.0), (1, 1, gap / 2.0)];
    static_trips.extend(kron_triplets(&dims, &[(e, &level_diag)]));
    static_trips.extend(kron_triplets(&dims, &[(a, &scaled(&number_operator(dims[a]), spec.omega_a.unwrap()))]));
    static_trips.extend(kron_triplets(&dims, &[(b, &scaled(&number_operator(dims[b]), spec.omega_b.unwrap()))]));

    // f (a^2 sigma_+ + a^dag^2 sigma_-): <3, n-2| f a^2 |1, n> = f sqrt(n(n-1)).
    let f = spec.f.unwrap();
    let mut two_photon = Vec::new();
    for n in 2..dims[a] {
        let v = f * ((n * (n - 1)) as f64).sqrt();
        two_photon.push((n - 2, n, v));
    }
    static_trips.extend(kron_triplets(&dims, &[(e, &[(1, 0, 1.0)]), (a, &two_photon)]));
    let two_photon_dag: Vec<_> = two_photon.iter().map(|&(r, c, v)| (c, r, v)).collect();
    static_trips.extend(kron_triplets(&dims, &[(e, &[(0, 1, 1.0)]), (a, &two_photon_dag)]));

    // g_b e^{-gamma t} (b sigma_+ + b^dag sigma_-).
    let mut fluor = Vec::new();
    let lower: Vec<_> = (1..dims[b]).map(|m| (m - 1, m, (m as f64).sqrt())).collect();
    let raise: Vec<_> = lower.iter().map(|&(r, c, v)| (c, r, v)).collect();
    fluor.extend(kron_triplets(&dims, &[(e, &[(1, 0, 1.0)]), (b, &lower)]));
    fluor.extend(kron_triplets(&dims, &[(e, &[(0, 1, 1.0)]), (b, &raise)]));
    let envelope_terms = vec![(
        CsrMatrix::from_triplets(layout.total_dim(), &fluor),
        Envelope::ExpDecay { amplitude: spec.g_b.unwrap(), rate: spec.gamma.unwrap() },
    )];

    let static_part = CsrMatrix::from_triplets(layout.total_dim(), &static_trips);
    Ok(OperatorMatrix { layout, static_part, envelope_terms })
}

/// Dispatches to the family's builder. Moving-atom models build without the
/// fluorescence factor here (the reference Hamiltonian); call
/// [`build_moving_atom`] directly for the all-orders variant.
pub fn build(spec: &ModelSpec) -> Result<OperatorMatrix> {
    match spec.family {
        Family::TwoLevel => build_two_level(spec),
        Family::ThreeLevelV1 | Family::ThreeLevelV2 => build_three_level(spec),
        Family::Array => build_array(spec),
        Family::MovingAtom => build_moving_atom(spec, false),
        Family::Semiclassical => build_semiclassical(spec),
        Family::RwaAea => build_rwa_aea(spec),
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::fock::{build_basis, build_basis_with};
    use num_complex::Complex64;

    fn entry(op: &OperatorMatrix, t: f64, row: &[usize], col: &[usize]) -> f64 {
        op.entry(t, op.layout.flat_index(row), op.layout.flat_index(col))
    }

    #[test]
    fn basis_dimensions_match_factor_products() {
        let mut two = two_level_spec();
        two.n_a_max = Some(30);
        two.n_b_max = Some(10);
        assert_eq!(build_basis(&two).unwrap().total_dim(), 2 * 31 * 11);

        let mut three = three_level_spec(false);
        three.n_a_max = Some(30);
        three.n_b_max = Some(10);
        assert_eq!(build_basis(&three).unwrap().total_dim(), 3 * 31 * 11);

        let mut moving = moving_atom_spec();
        moving.grid_points = Some(500);
        moving.n_a_max = Some(10);
        assert_eq!(build_basis(&moving).unwrap().total_dim(), 2 * 500 * 11);
    }

    #[test]
    fn two_level_pump_matrix_elements_follow_the_ladder() {
        let spec = two_level_spec();
        let op = build_two_level(&spec).unwrap();
        let g_a = spec.g_a.unwrap();
        for n in 1..=4usize {
            let v = entry(&op, 0.0, &[0, n, 0], &[1, n - 1, 0]);
            let expected = g_a * (n as f64).sqrt();
            assert!(
                (v - expected).abs() < 1e-14,
                "<1,{n},0|H|2,{},0> = {v}, expected {expected}",
                n - 1
            );
        }
    }

    #[test]
    fn uncoupled_two_level_hamiltonian_is_diagonal() {
        let mut spec = two_level_spec();
        spec.g_a = Some(0.0);
        spec.g_b = Some(0.0);
        let op = build_two_level(&spec).unwrap();
        let dense = op.materialize(3.7);
        let eps = [spec.epsilon_1, spec.epsilon_2.unwrap()];
        for flat in 0..op.layout.total_dim() {
            let multi = op.layout.multi_index(flat);
            let expected = eps[multi[0]]
                + multi[1] as f64 * spec.omega_a.unwrap()
                + multi[2] as f64 * spec.omega_b.unwrap();
            assert!((dense[[flat, flat]] - expected).abs() < 1e-14);
            for col in 0..op.layout.total_dim() {
                if col != flat {
                    assert_eq!(dense[[flat, col]], 0.0);
                }
            }
        }
    }

    #[test]
    fn three_level_direct_pump_term_present_only_in_second_scenario() {
        let v1 = build_three_level(&three_level_spec(false)).unwrap();
        let v2 = build_three_level(&three_level_spec(true)).unwrap();
        // Single-pump-photon 1 -> 3 element.
        assert_eq!(entry(&v1, 0.0, &[0, 1, 0], &[2, 0, 0]), 0.0);
        let direct = entry(&v2, 0.0, &[0, 1, 0], &[2, 0, 0]);
        assert!((direct - 0.1).abs() < 1e-14, "direct 1-3 pump element {direct}");
        // The two-step chain through level 2 exists in both.
        assert!(entry(&v1, 0.0, &[0, 1, 0], &[1, 0, 0]).abs() > 0.0);
        assert!(entry(&v1, 0.0, &[1, 1, 0], &[2, 0, 0]).abs() > 0.0);
    }

    #[test]
    fn three_level_v2_requires_direct_coupling_value() {
        let mut spec = three_level_spec(true);
        spec.g_a = None;
        let err = build_three_level(&spec).unwrap_err();
        assert!(format!("{err}").contains("g_a"));
    }

    #[test]
    fn array_single_atom_matches_two_level_up_to_a_constant_shift() {
        let mut array = array_spec(1);
        array.omega_s = Some(1.0);
        array.g_a = Some(0.1);
        array.alpha = Some(1.0);
        let mut two = two_level_spec();
        two.omega_a = array.omega_a;
        let a = build_array(&array).unwrap();
        let t = build_two_level(&two).unwrap();
        assert_eq!(a.layout, t.layout);
        let shift = array.omega_s.unwrap() / 2.0;
        for time in [0.0, 5.0] {
            let da = a.materialize(time);
            let dt = t.materialize(time);
            for r in 0..a.layout.total_dim() {
                for c in 0..a.layout.total_dim() {
                    let expected = dt[[r, c]] - if r == c { shift } else { 0.0 };
                    assert!(
                        (da[[r, c]] - expected).abs() < 1e-14,
                        "array vs two-level mismatch at ({r}, {c}), t = {time}"
                    );
                }
            }
        }
    }

    #[test]
    fn collective_coupling_elements_match_the_angular_momentum_ladder() {
        let n = 10usize;
        let sx = spin_x(n);
        let s = n as f64 / 2.0;
        for j in 0..n {
            let m = j as f64 - s;
            let expected = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
            let found = sx
                .iter()
                .find(|&&(r, c, _)| r == j && c == j + 1)
                .map(|&(_, _, v)| v)
                .unwrap();
            assert!((found - expected).abs() < 1e-14);
        }
        // Ten atoms at the reference cutoffs stay desk-scale.
        let spec = array_spec(10);
        let dim = build_basis(&spec).unwrap().total_dim();
        assert_eq!(dim, 11 * 34 * 11);
        assert!(dim < 100_000);
    }

    #[test]
    fn moving_atom_pump_profile_vanishes_outside_the_cavity() {
        let spec = moving_atom_spec();
        let op = build_moving_atom(&spec, false).unwrap();
        let grid = spec.grid().unwrap();
        let (x1, x2) = (spec.x_1.unwrap(), spec.x_2.unwrap());
        for j in (0..grid.points).step_by(23) {
            let v = entry(&op, 0.0, &[0, j, 1], &[1, j, 0]);
            if grid.x(j) < x1 || grid.x(j) > x2 {
                assert_eq!(v, 0.0, "coupling leaked outside the cavity at grid point {j}");
            }
        }
        // Mid-cavity the profile reaches its sine maximum.
        let mid = (0..grid.points)
            .min_by(|&i, &j| {
                let c = (x1 + x2) / 2.0;
                (grid.x(i) - c).abs().partial_cmp(&(grid.x(j) - c).abs()).unwrap()
            })
            .unwrap();
        let v = entry(&op, 0.0, &[0, mid, 1], &[1, mid, 0]);
        assert!((v - spec.g_a.unwrap()).abs() < 1e-4 * spec.g_a.unwrap());
    }

    #[test]
    fn moving_atom_kinetic_term_is_exactly_symmetric() {
        let spec = moving_atom_spec();
        let op = build_moving_atom(&spec, false).unwrap();
        assert!(op.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn moving_atom_rejects_underresolved_cavities() {
        let mut spec = moving_atom_spec();
        spec.grid_points = Some(60);
        let err = build_moving_atom(&spec, false).unwrap_err();
        assert!(format!("{err}").contains("at least 10"));
    }

    #[test]
    fn semiclassical_drive_amplitude_doubles_the_field_product() {
        let mut spec = two_level_spec().semiclassical_reduction().unwrap();
        spec.g_a = Some(0.1);
        spec.alpha = Some(1.0);
        let op = build_semiclassical(&spec).unwrap();
        let v = entry(&op, 0.0, &[0, 0], &[1, 0]);
        assert!((v - 0.2).abs() < 1e-14, "drive amplitude at t=0 is {v}");
        // Zero product means no drive at any time.
        spec.g_a = Some(0.0);
        let op = build_semiclassical(&spec).unwrap();
        for t in [0.0, 1.3, 7.9] {
            assert_eq!(entry(&op, t, &[0, 0], &[1, 0]), 0.0);
        }
    }

    #[test]
    fn rwa_model_couples_levels_through_photon_pairs() {
        let mut spec = ModelSpec::new(Family::RwaAea);
        spec.epsilon_3 = Some(1.0);
        spec.omega_a = Some(0.5);
        spec.omega_b = Some(1.0);
        spec.f = Some(0.1);
        spec.g_b = Some(0.01);
        spec.gamma = Some(0.02);
        spec.alpha = Some(1.0);
        let op = build_rwa_aea(&spec).unwrap();
        for n in 2..=5usize {
            let v = entry(&op, 0.0, &[1, n - 2, 0], &[0, n, 0]);
            let expected = 0.1 * ((n * (n - 1)) as f64).sqrt();
            assert!((v - expected).abs() < 1e-14, "two-photon element at n = {n} is {v}");
        }
        // The two-photon term annihilates zero- and one-photon pump states:
        // no elements reach n = 0, 1 columns from the upper level.
        for n in 0..=1usize {
            for m in 0..3usize {
                assert_eq!(entry(&op, 0.0, &[1, m, 0], &[0, n, 0]), 0.0);
            }
        }
        // No counter-rotating fluorescence term: sigma_+ b^dag absent.
        assert_eq!(entry(&op, 0.0, &[1, 0, 1], &[0, 0, 0]), 0.0);
        assert!(op.hermiticity_defect() < 1e-15);
    }

    #[test]
    fn every_builder_output_is_symmetric() {
        let builders: Vec<OperatorMatrix> = vec![
            build_two_level(&two_level_spec()).unwrap(),
            build_three_level(&three_level_spec(false)).unwrap(),
            build_three_level(&three_level_spec(true)).unwrap(),
            build_array(&array_spec(3)).unwrap(),
            build_moving_atom(&moving_atom_spec(), true).unwrap(),
            build_semiclassical(&two_level_spec().semiclassical_reduction().unwrap()).unwrap(),
        ];
        for op in &builders {
            assert!(op.hermiticity_defect() < 1e-13);
        }
    }

    #[test]
    fn envelope_evaluation_matches_closed_forms() {
        let spec = two_level_spec();
        let op = build_two_level(&spec).unwrap();
        let (_, env) = &op.envelope_terms[0];
        assert_eq!(env.value(0.0), spec.g_b.unwrap());
        let at_100 = env.value(100.0);
        let expected = spec.g_b.unwrap() * (-2.0f64).exp();
        assert!(
            (at_100 - expected).abs() < 1e-15,
            "envelope at t = 100 is {at_100}, expected g_b e^-2 = {expected}"
        );
    }

    #[test]
    fn matrix_free_apply_matches_materialized_product() {
        let op = build_two_level(&two_level_spec()).unwrap();
        let dim = op.layout.total_dim();
        // Deterministic pseudo-random vector.
        let x: Vec<Complex64> = (0..dim)
            .map(|i| {
                let s = (i as f64 * 0.7311).sin();
                let c = (i as f64 * 1.9173).cos();
                Complex64::new(s, 0.5 * c)
            })
            .collect();
        let mut y = vec![Complex64::new(0.0, 0.0); dim];
        let t = 3.5;
        op.apply(t, &x, &mut y);
        let dense = op.materialize(t);
        for r in 0..dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..dim {
                acc += dense[[r, c]] * x[c];
            }
            assert!((acc - y[r]).norm() < 1e-14, "row {r} mismatch");
        }
    }

    #[test]
    fn validation_errors_name_the_offending_field() {
        let mut spec = two_level_spec();
        spec.gamma = Some(-0.5);
        let msg = format!("{}", spec.validate().unwrap_err());
        assert!(msg.contains("gamma") && msg.contains("nonnegative"), "{msg}");

        let mut spec = two_level_spec();
        spec.omega_b = None;
        let msg = format!("{}", spec.validate().unwrap_err());
        assert!(msg.contains("omega_b") && msg.contains("required"), "{msg}");

        let mut spec = moving_atom_spec();
        spec.x_1 = Some(9.0e4);
        spec.x_2 = Some(8.0e4);
        let msg = format!("{}", spec.validate().unwrap_err());
        assert!(msg.contains("x_1") && msg.contains("x_2"), "{msg}");
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = two_level_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: ModelSpec = toml::from_str(&text).unwrap();
        assert_eq!(spec, back);
        // Unknown keys are rejected.
        let bad = format!("{text}\nunknown_knob = 3.0\n");
        assert!(toml::from_str::<ModelSpec>(&bad).is_err());
    }

    #[test]
    fn builders_without_fluorescence_drop_the_decay_channel() {
        let spec = two_level_spec();
        let op = build_two_level_with(&spec, false).unwrap();
        assert!(op.envelope_terms.is_empty());
        assert_eq!(op.layout.total_dim(), 2 * 10);
    }
}
