//! Exact-numerics simulator for multi-photon fluorescence of driven two-level
//! systems: a single atom at rest, an array of atoms coupled to a common mode,
//! and an atom moving through an optical cavity.
//!
//! The electron-photon Hilbert space is a tensor product of an electronic
//! factor, an optional center-of-mass position grid, a pump-photon number
//! ladder and a fluorescence-photon number ladder ([`fock`]). Hamiltonians for
//! every model family are assembled as sparse real-symmetric matrices with
//! time-dependent scalar envelopes attached per term ([`hamiltonian`]), and
//! states are evolved with a short iterated Lanczos exponential stepper
//! ([`propagator`]). The fluorescence observable is the probability of having
//! emitted at least one photon at the scan frequency, resolved in time and
//! frequency ([`spectra`]). Supporting analyses: dressed-state energies and
//! the conserved parity operator ([`dressed`]), the Holstein-Primakoff
//! normal-mode criticality of the atom-array model ([`dicke`]), and the
//! moving-atom pipeline with its first-order-in-`g_b` spectrum, Ehrenfest
//! comparison and mass-scaling transform ([`motion`]).
//!
//! All Hamiltonians in scope are real symmetric; complex arithmetic enters
//! only through state vectors and spectral amplitudes.

// Forces the BLAS/LAPACK link against the system OpenBLAS.
extern crate openblas_src;

pub mod dataset;
pub mod dicke;
pub mod dressed;
pub mod fock;
pub mod hamiltonian;
pub mod motion;
pub mod propagator;
pub mod sparse;
pub mod spectra;

/// Errors surfaced by builders, solvers and dataset I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model or basis parameter violates its documented constraint. The
    /// message names the offending field and the rule it breaks.
    #[error("invalid model: {0}")]
    InvalidModel(String),
    /// A propagation step could not reach the requested tolerance.
    #[error("propagation failed at t = {t}: {message}")]
    Propagation { t: f64, message: String },
    /// A parameter scan had failing points; all offending values are listed.
    #[error("scan failed at {0}")]
    ScanFailure(String),
    /// Dataset serialization/deserialization problems.
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }
}
