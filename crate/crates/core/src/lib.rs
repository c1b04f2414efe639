//! Sampling from smooth, possibly multimodal densities `exp(-V)` with a
//! late-initialized restricted Gaussian walk, plus the numerical toolkit used
//! to check the method: closed-form Poincare-constant calculators, identity
//! verifiers built on quadrature oracles, and statistical diagnostics.
//!
//! The crate is organized around the sampler pipeline:
//!
//! * [`potential`] declares target densities (`exp(-V)` with smoothness and
//!   moment metadata) and counts every oracle query.
//! * [`processes`] holds the two continuous-time pictures the sampler
//!   interpolates between (a tilting process and an Ornstein-Uhlenbeck flow)
//!   and the identity checks relating them.
//! * [`rgo`] implements the restricted Gaussian oracle: an accelerated
//!   proximal minimization followed by exact rejection sampling.
//! * [`dynamics`] runs the discrete walk, including the late (Gaussian)
//!   initialization, iteration-count formulas, and Poissonized stopping.
//! * [`poincare`] evaluates every closed-form spectral-gap bound the method
//!   comes with, reporting infinite bounds as first-class values.
//! * [`diagnostics`] provides divergences, histogram distances, and the
//!   identity battery behind the `verify` subcommand.
//! * [`cli`] is the config-file front end used by the `locsamp` binary.

pub mod cli;
pub mod diagnostics;
pub mod dynamics;
pub mod linalg;
pub mod poincare;
pub mod potential;
pub mod processes;
pub mod quadrature;
pub mod rgo;

use thiserror::Error;

/// Crate-wide error type. Validation problems use [`Error::Invalid`];
/// budget-style failures get dedicated variants so callers can map them to
/// exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("accelerated minimizer hit the {cap}-iteration cap (last gradient norm {grad_norm:.3e})")]
    AgmIterationCap { cap: u64, grad_norm: f64 },

    #[error("rejection sampler hit the {cap}-round cap")]
    RejectionCap { cap: u64 },

    #[error("quadrature on [{a:.6e}, {b:.6e}] stalled at error estimate {err:.3e} (tolerance {tol:.1e})")]
    QuadratureStalled { a: f64, b: f64, err: f64, tol: f64 },

    #[error("verification routines support dimension 1 or 2, got {0}")]
    UnsupportedDimension(usize),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
