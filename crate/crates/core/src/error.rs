use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped so front-ends can map them onto coarse categories
/// (see [`Error::category`]).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot_index})")]
    NotPositiveDefinite { pivot_index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix dimension {0} exceeds the configured maximum")]
    Overflow(usize),
    #[error("sparsity pattern differs from the analysed pattern")]
    PatternMismatch,
    #[error("invalid matrix entry: {0}")]
    InvalidEntry(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("mesh refinement exceeded {max_vertices} vertices")]
    RefinementLimit { max_vertices: usize },

    #[error("unsupported SPDE smoothness alpha = {0}")]
    UnsupportedAlpha(u32),
    #[error("AR1 coefficient must satisfy |phi| < 1, got {0}")]
    InvalidPhi(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("point {index} ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { index: usize, x: f64, y: f64 },
    #[error("latent dimension overflow")]
    LayoutOverflow,
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("hyperparameter optimisation did not converge within {evaluations} evaluations")]
    NonConvergence { evaluations: usize },

    #[error("missing covariate `{name}` for cell {cell} month {month}")]
    MissingCovariate { cell: String, month: usize, name: String },
    #[error("cell {0} lies outside the mesh")]
    CellOutsideMesh(String),

    #[error("variance inputs must be nonnegative")]
    NegativeVariance,
    #[error("degenerate variance in correlation")]
    DegenerateVariance,
    #[error("fold {0} leaves an empty training set")]
    EmptyTrainingFold(usize),
}

/// Coarse error classes used by front-ends for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Numerical,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NotPositiveDefinite { .. }
            | PatternMismatch
            | Overflow(_)
            | RefinementLimit { .. }
            | NonConvergence { .. }
            | LayoutOverflow
            | DegenerateVariance => ErrorCategory::Numerical,
            _ => ErrorCategory::Data,
        }
    }
}
