//! Error type shared across the library.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Vector/matrix dimensions do not agree.
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// Block or coordinate index outside the valid range.
    IndexOutOfRange { index: usize, len: usize },
    /// Iterative estimate did not reach the requested tolerance; carries the
    /// last estimate so callers can decide whether it is usable.
    NonConvergence {
        context: &'static str,
        estimate: f64,
        iterations: usize,
    },
    /// Point outside the domain of a term (e.g. log of a nonpositive value).
    Domain(String),
    /// Separable-term kind without a closed-form prox.
    UnsupportedTerm(String),
    /// Precondition violation on an argument.
    InvalidArgument(String),
    /// No feasible point exists (active-set enumeration exhausted).
    Infeasible(String),
    /// A reference run finished without meeting the certification tolerance.
    CertificationFailed { stationarity: f64, feasibility: f64 },
    /// Schedule parameters violate a condition they were required to satisfy.
    ScheduleViolation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: dimension mismatch (expected {expected}, got {got})"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::NonConvergence {
                context,
                estimate,
                iterations,
            } => write!(
                f,
                "{context}: no convergence after {iterations} iterations (last estimate {estimate})"
            ),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::UnsupportedTerm(msg) => write!(f, "unsupported term: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Infeasible(msg) => write!(f, "infeasible: {msg}"),
            Error::CertificationFailed {
                stationarity,
                feasibility,
            } => write!(
                f,
                "reference certification failed (stationarity {stationarity:.3e}, feasibility {feasibility:.3e})"
            ),
            Error::ScheduleViolation(msg) => write!(f, "schedule violation: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
