use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("salient region is empty; there is no hypothesis to test")]
    EmptyRegion,
    #[error("global statistic is zero; the test direction is undefined")]
    DegenerateStatistic,
    #[error("truncation region has zero probability mass at working precision")]
    ZeroMass,
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Model(#[from] crate::modelio::ModelError),
}

impl Error {
    /// True for errors that signal a bug or numerical breakdown rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Inconsistent(_) | Error::ZeroMass)
    }
}
