use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} is not inside the domain (vertical gap {gap:.3e})")]
    DomainMembership { point: Point, gap: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("localization failed at vertex {vertex}: {reason}")]
    Localization { vertex: usize, reason: String },

    #[error("localization failed in chart {chart}: {source}")]
    Chart {
        chart: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {final_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("truncated cone is empty: height {height:.3e} is below the sampling resolution; use h >= {minimum:.3e}")]
    EmptyCone { height: f64, minimum: f64 },

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("field does not vanish on the required surface ball at {} boundary points (first: {:?})", .points.len(), .points.first())]
    TraceViolation { points: Vec<Point> },

    #[error("quadrature node too close to the boundary (delta = {delta:.3e}) at {point:?}")]
    BoundaryNode { point: Point, delta: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input at line {line}: {message}")]
    Format { line: usize, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
