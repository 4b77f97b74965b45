use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    NotAdmissible,
    NotConverged,
}

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("target not in range of L: residual {residual:.3e}")]
    NotInRange { residual: f64 },
    #[error("singular Gramian: lambda_min {lambda_min:.3e}, lambda_max {lambda_max:.3e}")]
    SingularGramian { lambda_min: f64, lambda_max: f64 },
    #[error("fixed-point iteration hit {iterations} iterations (last delta {last_delta:.3e})")]
    MaxIterations {
        iterations: usize,
        last_delta: f64,
        deltas: Vec<f64>,
    },
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("bound undefined: {0}")]
    UndefinedBound(String),
    #[error("admissible set is empty: {0}")]
    EmptyAdmissibleSet(String),
    #[error("not admissible: {0}")]
    NotAdmissible(String),
    #[error("model has no modulation matrix")]
    NotGeneralModel,
    #[error(
        "outer freezing iteration hit {iterations} iterations (last residual {last_residual:.3e})"
    )]
    MaxOuterIterations {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },
    #[error("outer iteration {iteration}: {source}")]
    Outer {
        iteration: usize,
        /// Frozen trajectory states at the failing iteration.
        z: Vec<Vec<f64>>,
        #[source]
        source: Box<Error>,
    },
    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Syntax { .. }
            | Error::UnknownIdentifier { .. }
            | Error::Arity { .. }
            | Error::Schema(_)
            | Error::InconsistentDimensions(_)
            | Error::GridMismatch(_)
            | Error::NotGeneralModel => ErrorKind::Input,
            Error::Domain(_)
            | Error::NonFinite(_)
            | Error::NotInRange { .. }
            | Error::SingularGramian { .. }
            | Error::UndefinedBound(_) => ErrorKind::Numeric,
            Error::EmptyAdmissibleSet(_) | Error::NotAdmissible(_) => ErrorKind::NotAdmissible,
            Error::MaxIterations { .. }
            | Error::NotConverged(_)
            | Error::MaxOuterIterations { .. } => ErrorKind::NotConverged,
            Error::Outer { source, .. } | Error::Window { source, .. } => source.kind(),
        }
    }
}
