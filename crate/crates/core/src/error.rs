use thiserror::Error;

/// Errors raised while constructing, validating, analyzing or running a method.
#[derive(Debug, Error)]
pub enum GlmError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("abscissae must be finite and pairwise distinct: {0:?}")]
    ConfluentAbscissae(Vec<f64>),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("unsupported order {order}: {reason}")]
    UnsupportedOrder { order: usize, reason: String },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("tableau schema violation: {0}")]
    Schema(String),

    #[error("tableau invariant violated: {0}")]
    Invariant(String),

    #[error("eigenvalue iteration did not converge for a {0}x{0} matrix")]
    Eigensolver(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage {stage}: Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence {
        stage: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<GlmError>,
    },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("non-finite state encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GlmError {
    /// True for errors caused by bad input (as opposed to failures during a run).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GlmError::InvalidDimension(_)
                | GlmError::DimensionMismatch(_)
                | GlmError::ConfluentAbscissae(_)
                | GlmError::UnsupportedOrder { .. }
                | GlmError::Schema(_)
                | GlmError::Invariant(_)
                | GlmError::Config(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GlmError>;
