//! Simulation and density-regularity toolkit for multi-type continuous-state
//! branching processes with immigration (CBI processes) on the nonnegative
//! orthant.
//!
//! The crate is organised along the workflow of an experiment:
//!
//! * [`params`] validates admissible parameter tuples `(c, β, B, ν, μ)` and
//!   computes the effective drift used by the jump-diffusion representation.
//! * [`levy`] represents Lévy measures on the orthant, integrates and samples
//!   them, and evaluates the real part of the frozen-noise symbol.
//! * [`sim`] simulates the process by a full-truncation Euler scheme with
//!   Poisson thinning, plus the frozen-coefficient one-step approximation and
//!   time-regularity diagnostics.
//! * [`density`] estimates weighted densities of the terminal law and their
//!   empirical anisotropic Besov norms.
//! * [`smoothing`] produces smoothing certificates and checks the hypotheses
//!   of the density-existence theorems, including the Hölder bookkeeping that
//!   yields the approximation rates `κ_i`.
//! * [`oracle`] computes Laplace transforms from Riccati equations in
//!   dimension one, as ground truth for the simulator.
//! * [`experiment`] ties everything into config-driven runs with CSV and JSON
//!   artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod density;
pub mod experiment;
pub mod levy;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod smoothing;
pub mod stats;

pub use levy::{LevyMeasureSpec, Region};
pub use params::{AdmissibleParams, ValidationReport};
pub use quad::Integral;

/// Version string embedded in every JSON artifact.
pub const ARTIFACT_VERSION: &str = concat!("cbi-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("region has infinite mass: {0}")]
    InfiniteMass(String),
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state at step {step} on path {path}")]
    NonFiniteState { step: u64, path: u64 },
    #[error("insufficient paths: {0}")]
    InsufficientPaths(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("missing smoothing certificate")]
    MissingCertificate,
    #[error("ODE integration failed: {0}")]
    OdeFailure(String),
    #[error("config error in {path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
