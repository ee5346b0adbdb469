use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("domain error in {context}: {reason}")]
    Domain { context: String, reason: String },

    #[error("eigensolver failed on slice {slice}: {reason}")]
    Eigen { slice: usize, reason: String },

    #[error("linear solve failed: {0}")]
    Linear(String),

    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("gummel did not converge at V_G={vg} V, V_DS={vds} V after {iterations} iterations (|dV|={last_update:.3e} V)")]
    GummelDiverged {
        vg: f64,
        vds: f64,
        iterations: usize,
        last_update: f64,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(key: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn domain(context: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain {
            context: context.into(),
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
