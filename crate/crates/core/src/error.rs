use thiserror::Error;

/// Failure modes shared by the identification, control, and scoring layers.
///
/// Pipeline stages wrap causes in [`Error::Stage`] so a failure deep in a
/// matrix solve still names the step that triggered it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad input: {0}")]
    BadInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("dataset must contain at least {required} trajectories, got {actual}")]
    TooFewTrajectories { required: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate trajectory id {0}")]
    DuplicateId(usize),

    #[error("trajectory id sets do not match: {0}")]
    IdMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("state norm {norm:.3e} exceeded divergence threshold at step {step}")]
    Diverged { step: usize, norm: f64 },

    #[error("(A, B) admits no stabilizing feedback: {0}")]
    NonStabilizable(String),

    #[error("iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("closed loop is not Schur stable (spectral radius {rho:.6})")]
    Unstable { rho: f64 },

    #[error("identified model violates the stabilizability/detectability assumption: {0}")]
    AssumptionViolated(String),

    #[error("linear operator is numerically singular: {0}")]
    SingularOperator(String),

    #[error("eigenvalue computation failed to converge")]
    EigenFailure,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
