use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),
    /// A model, parameter or experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The operation requires exhaustive subset enumeration beyond the cap.
    #[error("capacity error: {streams} streams exceeds the limit of {limit}")]
    Capacity { streams: usize, limit: usize },
    /// The caller violated a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
}
