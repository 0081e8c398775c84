//! Error type shared by every module in the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor ops, training, planning and reporting.
#[derive(Debug)]
pub enum Error {
    /// Dimensions of an input do not match what an operation requires.
    Shape(String),
    /// A non-finite value was produced or supplied where finite math is required.
    Numeric(String),
    /// The caller violated an operation's contract (empty input, bad argument, ...).
    Usage(String),
    /// A hyper-parameter combination is invalid (e.g. a degenerate penalty slope).
    Config(String),
    /// A penalty map does not cover the weights it claims to cover.
    PlanInconsistency(String),
    /// A pruning budget cannot be met even with every layer at the ratio cap.
    InfeasiblePlan {
        requested: f64,
        max_achievable: f64,
    },
    /// An operation is deliberately not supported (e.g. channel-scheme shrink).
    Unsupported(String),
    /// A pruning run missed its per-layer targets within the iteration budget.
    NonConvergence { layer: String, detail: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// A serialized artifact (manifest, plan, log) could not be parsed.
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape(msg) => write!(f, "shape error: {msg}"),
            Self::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Self::Usage(msg) => write!(f, "usage error: {msg}"),
            Self::Config(msg) => write!(f, "configuration error: {msg}"),
            Self::PlanInconsistency(msg) => write!(f, "plan inconsistency: {msg}"),
            Self::InfeasiblePlan {
                requested,
                max_achievable,
            } => write!(
                f,
                "infeasible plan: requested overall ratio {requested} exceeds the maximum \
                 achievable {max_achievable} with every layer at the cap"
            ),
            Self::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Self::NonConvergence { layer, detail } => {
                write!(f, "pruning did not converge on layer {layer}: {detail}")
            }
            Self::Io(err) => write!(f, "i/o error: {err}"),
            Self::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Self::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Self::Format(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Self::Format(err.to_string())
    }
}
