//! Error type shared by all numerical modules.

use std::error::Error as StdError;
use std::fmt;

/// Errors produced by the numerical routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    Dimension {
        op: &'static str,
        detail: String,
    },
    /// A parameter failed validation (non-positive counts, bad ranges, ...).
    InvalidArgument {
        op: &'static str,
        detail: String,
    },
    /// The requested time scheme cannot be applied to the given flow.
    UnsupportedScheme {
        scheme: &'static str,
        detail: String,
    },
    /// The requested solver variant cannot be applied to the given flow.
    UnsupportedMethod {
        method: &'static str,
        detail: String,
    },
    /// A linear system was singular to working precision.
    Singular {
        context: String,
    },
    /// A quadratic form that must be positive was not; the operator is not SPD.
    NotSpd {
        context: String,
    },
    /// An iteration produced non-finite values or blew past a divergence guard.
    Numeric {
        context: String,
    },
    /// Gradient iteration made no progress for several consecutive steps.
    Stalled {
        context: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => {
                write!(f, "dimension mismatch in {op}: {detail}")
            }
            Error::InvalidArgument { op, detail } => {
                write!(f, "invalid argument for {op}: {detail}")
            }
            Error::UnsupportedScheme { scheme, detail } => {
                write!(f, "scheme {scheme} not supported here: {detail}")
            }
            Error::UnsupportedMethod { method, detail } => {
                write!(f, "method {method} not supported here: {detail}")
            }
            Error::Singular { context } => {
                write!(f, "matrix singular to working precision in {context}")
            }
            Error::NotSpd { context } => {
                write!(f, "operator is not symmetric positive definite in {context}")
            }
            Error::Numeric { context } => write!(f, "numerical failure: {context}"),
            Error::Stalled { context } => {
                write!(f, "iteration stalled: {context} (try a smaller step/rho)")
            }
        }
    }
}

impl StdError for Error {}

pub type Result<T> = std::result::Result<T, Error>;
