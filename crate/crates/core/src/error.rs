use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A direction-defining vector vanished (zero wave vector or coincident pair).
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    /// Shapes or constraints between inputs do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("undefined rate: {0}")]
    UndefinedRate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
