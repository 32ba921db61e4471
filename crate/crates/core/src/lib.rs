//! Massless Dirac fields on a periodic box: exact spinor algebra, spectral
//! evolution with null-form nonlinearities, radiation fields at null
//! infinity, energy diagnostics, and inversion of the radiation-field maps.
//!
//! The crate is organised bottom-up:
//!
//! * [`clifford`]: gamma matrices, projectors `P(ω)` and null forms.
//! * [`grid`]: the periodic grid, spinor fields, FFTs and interpolation.
//! * [`propagate`]: free, sourced, semilinear and linearized evolution.
//! * [`symmetry`]: commuting vector fields and weighted norms.
//! * [`radiation`]: sphere/retarded-time grids and radiation-field extraction.
//! * [`diagnostics`]: energy identities, ghost weight, Klainerman–Sobolev, peeling.
//! * [`scattering`]: forward maps, adjoint, CG and Picard inversion.

pub mod clifford;
pub mod diagnostics;
pub mod fit;
pub mod grid;
pub mod propagate;
pub mod radiation;
pub mod scattering;
pub mod symmetry;

pub use clifford::{inner, null_form, Direction, Matrix4C, NullFormCoeffs, Spinor, C64};
pub use grid::{DataKind, DataSpec, Grid, SpinorField};
pub use propagate::{Direction as TimeDirection, EvolveConfig, Nonlinearity, RunHandle};
pub use radiation::{NullGrid, RadiationField, Sphere};
pub use symmetry::{Family, Kind, NormConfig, VectorFieldId};

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} index {index} out of range")]
    IndexOutOfRange { what: &'static str, index: usize },
    #[error("direction is not a unit vector (|w|^2 = {norm_sqr})")]
    NotUnit { norm_sqr: f64 },
    #[error("operator {0:?} belongs to the wrong family")]
    WrongFamily(VectorFieldId),
    #[error("singular system: {0}")]
    Singular(&'static str),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unresolvable data: {0}")]
    Unresolved(String),
    #[error("point {0:?} lies outside the box")]
    OutsideBox([f64; 3]),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite values at t = {t}")]
    NonFinite { t: f64 },
    #[error("blow-up guard tripped at t = {t}: max |phi| = {max}")]
    BlowUp { t: f64, max: f64 },
    #[error("time {t} outside the run range [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("containment violated: {0}")]
    Containment(String),
    #[error("insufficient snapshots: {0}")]
    Snapshots(String),
    #[error("not supported: {0}")]
    Unsupported(String),
    #[error("iteration failed: {0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
