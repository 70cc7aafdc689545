//! Numerical laboratory for two-type continuous-state branching processes
//! with immigration (CBI processes) whose branching is modulated by a scalar
//! Lévy environment.
//!
//! The crate is layered from closed-form algebra up to Monte-Carlo
//! experiments:
//!
//! * [`mechanisms`]: branching and immigration mechanisms built from
//!   finite-activity jump measures, with closed-form jump integrals.
//! * [`levy_env`]: the scalar environment, its exponential-moment rate beta,
//!   and grid-aligned path sampling.
//! * [`cumulant`]: backward cumulant flows along a frozen environment path,
//!   quenched/annealed/stationary Laplace functionals, the large-terminal
//!   limit `vbar`, and domination checks against a scalar envelope.
//! * [`moments`]: first-moment algebra: the 2x2 matrix exponential, the mean
//!   decay vectors pi and pi', spectral data (discriminant, decay rate rho)
//!   and the distance rescaling factor theta.
//! * [`simulate`]: pathwise Euler-type simulation in environment-discounted
//!   coordinates, annealed ensembles, shared-environment couplings, and
//!   stationary sampling.
//! * [`transport`]: exact L1-Wasserstein distance between equal-size
//!   empirical measures via an assignment solver.
//! * [`ergodicity`]: end-to-end experiments: exponential Wasserstein decay,
//!   total-variation bounds, coupling inequalities, first moments, and
//!   domination sweeps.
//! * [`config`]: the JSON model document, validation, and content hashing.
//!
//! Everything numeric is generic over the scalar type through [`Real`];
//! the aliases at the crate root pin `f64` for everyday use.

// Guards are written `!(x > 0)` rather than `x <= 0` so NaN fails too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cumulant;
pub mod ergodicity;
pub mod levy_env;
pub mod linalg;
pub mod mechanisms;
pub mod moments;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod stats;
pub mod transport;

pub use linalg::{Mat2, Vec2};
pub use scalar::Real;

/// Concrete `f64` aliases; the command-line binary and the experiment
/// drivers run at this precision.
pub type V2 = Vec2<f64>;
/// 2x2 matrix at `f64`.
pub type M2 = Mat2<f64>;
/// Model document at `f64`.
pub type ModelSpec64 = config::ModelSpec<f64>;
/// Environment specification at `f64`.
pub type EnvSpec64 = levy_env::EnvSpec<f64>;
/// Sampled environment path at `f64`.
pub type EnvPath64 = levy_env::EnvPath<f64>;
/// Backward-solver options at `f64`.
pub type SolverOpts64 = cumulant::SolverOpts<f64>;
/// Empirical measure at `f64`.
pub type EmpiricalMeasure64 = transport::EmpiricalMeasure<f64>;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structurally invalid argument (negative weight, non-finite entry, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A backward solve left the configured ceiling.
    #[error("cumulant solve blew up: a component exceeded {ceiling:e} at s = {at}")]
    BlowUp { ceiling: f64, at: f64 },
    /// Monte-Carlo estimate invalidated by blown-up paths.
    #[error("cumulant blow-up on {count} of {total} Monte-Carlo paths")]
    BlowUpPaths { count: usize, total: usize },
    /// Empirical transport needs equally sized point clouds.
    #[error("empirical measures must have equal size, got {left} and {right}")]
    SizeMismatch { left: usize, right: usize },
    /// Instance exceeds a documented size limit.
    #[error("{what}: size {n} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
    },
    /// The requested closed form does not cover this parameter regime.
    #[error("closed form unavailable: {0}")]
    ClosedFormUnavailable(String),
    /// Spectral quantities need a positive discriminant.
    #[error("spectral data requires (tr b)^2 - 4 det b > 0, got {delta}")]
    NonPositiveDiscriminant { delta: f64 },
    /// Malformed model document or run parameters.
    #[error("config error: {0}")]
    Config(String),
    /// Forwarded I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
