use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("solution has {got} entries, instance has {expected} columns")]
    SolutionLength { expected: usize, got: usize },

    #[error("solution is infeasible: V·x exceeds c at coordinate {coord}")]
    Infeasible { coord: usize },

    #[error("solution is not exact for this instance")]
    NotExact,

    #[error("undecided: node budget of {budget} expansions exceeded")]
    NodeBudgetExceeded { budget: u64 },

    #[error("state space has more than {cap} states")]
    StateCapExceeded { cap: usize },

    #[error("rejection cap of {cap} rounds reached without an exact sample")]
    RestartCapExceeded { cap: u64 },

    #[error("enumeration incomplete: {0}")]
    IncompleteEnumeration(String),

    #[error("kernel is not reversible w.r.t. target (max violation {violation:e})")]
    NonReversible { violation: f64 },

    #[error("kernel is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generator: {0}")]
    Generator(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
