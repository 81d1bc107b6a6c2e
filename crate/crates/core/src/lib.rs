//! Bond pricing and calibration for one- and two-factor short-rate models.
//!
//! The crate covers the standard single-factor families (Vasicek, CIR, Dothan,
//! the general CKLS power-volatility model, Black-Karasinski, and a quadratic
//! drift with a 1/r term) together with two-factor convergence models in which
//! a domestic rate reverts toward a stochastic foreign rate. For each family it
//! provides, where available:
//!
//! * exact zero-coupon bond prices ([`closedform`]),
//! * small-time analytical approximations with known error orders ([`approx`]),
//! * Taylor series and exponent-expansion prices ([`series`], [`expexp`]),
//! * finite-difference and Monte Carlo reference prices ([`pdeoracle`],
//!   [`simulate`]),
//! * least-squares calibration to panels of observed yields ([`calib`]), and
//! * error-norm / convergence-order tooling ([`analysis`]).
//!
//! Rates, times, and yields are plain `f64` in natural units: rates and yields
//! are decimals per year (0.05 means five percent), maturities are in years.
//! Any percent formatting is left to callers.

pub mod analysis;
pub mod approx;
pub mod calib;
pub mod closedform;
pub mod expexp;
pub mod models;
pub mod pdeoracle;
pub mod series;
pub mod simulate;

pub(crate) mod math;

use thiserror::Error;

/// Errors shared across the crate.
///
/// Numerical routines distinguish between *domain* problems (inputs outside a
/// model's admissible set, e.g. a negative rate in a square-root model) and
/// *numerical* failures (an iteration that did not converge, a solver that
/// produced non-finite values). Callers that map errors to process exit codes
/// should treat both as input/domain failures unless stated otherwise.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the admissible domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for the given model or parameter set.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative or discretized computation failed to converge or produced
    /// non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A dataset was malformed or inconsistent.
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn invalid_data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }
}
