//! Error type shared by all numerical operations.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of the numerical operations. Construction-time parameter
/// problems are `InvalidParameter`; the rest are runtime diagnostics from
/// iterative solvers and estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor or operation was handed a parameter outside its
    /// documented domain.
    InvalidParameter(String),
    /// An inverse-branch or root solve did not reach its residual target
    /// within the iteration cap (usually signals an invalid custom lift).
    NonConvergence { residual: f64 },
    /// The twisted equation cannot contract: `Re β ≤ 0`.
    Divergence,
    /// The series solver would need more terms than the cap allows.
    /// Carries the tail bound that was achievable.
    ToleranceNotReached { achievable: f64 },
    /// All wavelet coefficients are numerically zero, so no regularity
    /// slope can be fit.
    DegenerateInput,
    /// The deflated second-eigenvalue estimate is too close to the leading
    /// eigenvalue for the power iteration to be trusted.
    GapTooSmall { lambda: f64, second: f64 },
    /// Correlations failed to fall below the relative tail threshold
    /// within the configured lag window.
    TailNotDecaying { last: f64, threshold: f64 },
    /// A statistics operation was handed a β with nonzero imaginary part.
    ComplexBetaUnsupported,
    /// An operation that needs pointwise data received a purely
    /// distributional (Haar-coefficient) input.
    PointwiseUnavailable,
    /// An empty sample set was handed to a statistic.
    EmptySample,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::NonConvergence { residual } => {
                write!(f, "root solve did not converge (residual {residual:.3e})")
            }
            Error::Divergence => write!(f, "twisted equation diverges: Re beta must be positive"),
            Error::ToleranceNotReached { achievable } => write!(
                f,
                "series cap reached before tolerance; achievable tail bound {achievable:.3e}"
            ),
            Error::DegenerateInput => write!(f, "all wavelet coefficients below 1e-14"),
            Error::GapTooSmall { lambda, second } => write!(
                f,
                "spectral gap too small: second eigenvalue {second:.6e} vs leading {lambda:.6e}"
            ),
            Error::TailNotDecaying { last, threshold } => write!(
                f,
                "correlation tail not decaying: |C_k| = {last:.3e} above threshold {threshold:.3e}"
            ),
            Error::ComplexBetaUnsupported => {
                write!(f, "statistics require real beta (Im beta = 0)")
            }
            Error::PointwiseUnavailable => {
                write!(f, "input has no pointwise evaluation rule")
            }
            Error::EmptySample => write!(f, "empty sample"),
        }
    }
}

impl core::error::Error for Error {}
