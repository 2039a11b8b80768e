use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("load error at line {line}: {message}")]
    Load { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    Topology(String),

    #[error("degenerate triangle {triangle} (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("observation {index} lies {distance:e} from the surface (tolerance {tolerance:e})")]
    Location {
        index: usize,
        distance: f64,
        tolerance: f64,
    },

    #[error("chart error: {0}")]
    Chart(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("power iteration did not converge after {iterations} iterations (estimate {estimate}, residual {residual:e})")]
    Convergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
        vector: Vec<f64>,
    },

    #[error("h-transform is singular: 1 - (M phi0)^T u = {denominator:e}")]
    SingularTransform { denominator: f64 },

    #[error("degenerate likelihood: a(A phi0) = {a_phi}")]
    DegenerateLikelihood { a_phi: f64 },

    #[error("kernel matrix is ill-conditioned even with jitter {jitter:e}; use a positive noise tau")]
    Conditioning { jitter: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimization aborted: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by bad input or configuration rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Load { .. }
                | Error::Topology(_)
                | Error::DegenerateTriangle { .. }
                | Error::Location { .. }
                | Error::Chart(_)
                | Error::DimensionMismatch { .. }
                | Error::Domain(_)
                | Error::Io(_)
        )
    }
}
