use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("acquisition schedule is empty")]
    EmptySchedule,

    #[error("isochromat ensemble is empty")]
    EmptyEnsemble,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// The Fisher information cannot be inverted; the design does not
    /// identify all parameters (e.g. a schedule with only zero flips).
    #[error("singular Fisher information (condition number {condition:e})")]
    SingularInformation { condition: f64 },

    #[error("dictionary atom {index} (T1={t1} ms, T2={t2} ms) has a vanishing trajectory")]
    DegenerateAtom { index: usize, t1: f64, t2: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid design configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
