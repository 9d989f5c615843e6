use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {name}: {value} ({reason})")]
    InvalidInput {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("interpolation outside sampled range: {x} not in [{lo}, {hi}]")]
    Extrapolation { x: f64, lo: f64, hi: f64 },

    #[error("insufficient asymptotic points: {positive} positive, {negative} negative (need 2 each)")]
    InsufficientAsymptoticPoints { positive: usize, negative: usize },

    #[error("fit window too narrow: half-width {half_width} quanta covers {points} points (need {required})")]
    WindowTooNarrow {
        half_width: f64,
        points: usize,
        required: usize,
    },

    #[error("singular normal equations (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("least squares did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last: Box<crate::fitting::lsq::LsqReport>,
    },

    #[error("frequency grids do not match: {0}")]
    GridMismatch(String),

    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn schema(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            context: context.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NotConverged { .. }
                | Error::InsufficientAsymptoticPoints { .. }
                | Error::WindowTooNarrow { .. }
                | Error::DegenerateChain(_)
        )
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidInput {
            name,
            value,
            reason: "must be finite",
        })
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<f64> {
    ensure_finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidInput {
            name,
            value,
            reason: "must be non-negative",
        })
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<f64> {
    ensure_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidInput {
            name,
            value,
            reason: "must be strictly positive",
        })
    }
}
