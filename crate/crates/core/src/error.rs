use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The supply or a reward left the range of `f64`.
    #[error("supply overflow at step {step}")]
    SupplyOverflow { step: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Argument outside the support of a density or law.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bound whose constant is only known to exist, not its value.
    #[error("bound constant is not specified for regime {0}")]
    UnspecifiedConstant(&'static str),

    #[error("schedule is outside the classified regimes: {0}")]
    UnclassifiedRegime(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
