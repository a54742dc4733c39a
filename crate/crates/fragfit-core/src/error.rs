//! Error and warning types shared across the crate.

use thiserror::Error;

/// Errors produced by fragility-model construction, fitting and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on inputs was violated (bad arguments, invalid parameters).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The requested operation is not defined for the given model or link.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numerical procedure failed (singular information, divergent target, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File input/output failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A data file failed to parse; `row` is 1-based and counts the header.
    #[error("parse error in {path} at row {row}: {msg}")]
    Parse {
        path: String,
        row: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

/// Structured, non-fatal findings attached to fit results.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "kind")]
pub enum Warning {
    /// A damage-state category has no observations; nearby thresholds are
    /// weakly identified.
    ZeroCountCategory { category: usize },
    /// The log-probability floor was applied while evaluating the likelihood.
    LogFloor { observations: usize },
    /// Split-chain Rhat exceeded the 1.05 threshold for a parameter.
    HighRhat { param: String, rhat: f64 },
    /// Fewer posterior draws than recommended for importance sampling.
    FewDraws { draws: usize },
    /// Pareto tail-shape diagnostic above 0.7 for an observation.
    ParetoK { observation: usize, khat: f64 },
    /// Covariance fell back to a pseudo-inverse for weakly identified parameters.
    PseudoInverse { params: Vec<String> },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::ZeroCountCategory { category } => {
                write!(f, "category {category} has zero observations")
            }
            Warning::LogFloor { observations } => {
                write!(
                    f,
                    "log-probability floor applied to {observations} observation(s)"
                )
            }
            Warning::HighRhat { param, rhat } => {
                write!(f, "Rhat {rhat:.3} > 1.05 for parameter {param}")
            }
            Warning::FewDraws { draws } => {
                write!(f, "only {draws} posterior draws; >= 100 recommended")
            }
            Warning::ParetoK { observation, khat } => {
                write!(f, "pareto k {khat:.2} > 0.7 for observation {observation}")
            }
            Warning::PseudoInverse { params } => {
                write!(
                    f,
                    "pseudo-inverse covariance; weakly identified: {}",
                    params.join(", ")
                )
            }
        }
    }
}
