//! Failure classification for the process exit-code contract:
//! 2 = configuration, 3 = data, 4 = numerics, 5 = violated model assumption.

use std::fmt;

use trajinf::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration file or invalid option combination.
    Config(String),
    /// Unreadable, malformed, or inconsistent input files.
    Data(String),
    /// A solver or simulation failed numerically.
    Numerics(String),
    /// The fitted model broke a structural assumption (stabilizability,
    /// closed-loop stability) that the requested computation needs.
    Assumption(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerics(_) => 4,
            CliError::Assumption(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerics(m) => write!(f, "numerical error: {m}"),
            CliError::Assumption(m) => write!(f, "assumption violated: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        // Classify by the innermost cause; stage wrappers only add context.
        let msg = e.to_string();
        match e.root() {
            CoreError::BadInput(_) => CliError::Config(msg),
            CoreError::DimensionMismatch(_)
            | CoreError::TooFewTrajectories { .. }
            | CoreError::Empty(_)
            | CoreError::DuplicateId(_)
            | CoreError::IdMismatch(_)
            | CoreError::DegenerateInput(_) => CliError::Data(msg),
            CoreError::NonFinite(_)
            | CoreError::Diverged { .. }
            | CoreError::NoConvergence { .. }
            | CoreError::SingularOperator(_)
            | CoreError::EigenFailure
            | CoreError::NumericalFailure(_) => CliError::Numerics(msg),
            CoreError::NonStabilizable(_)
            | CoreError::Unstable { .. }
            | CoreError::AssumptionViolated(_) => CliError::Assumption(msg),
            CoreError::Stage { .. } => CliError::Numerics(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
