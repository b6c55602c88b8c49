use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolabError {
    /// Shape, degree or space mismatch between operands.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("not in H: tau(h) is singular in degree {degree} (condition number {condition:.3e})")]
    NotInH { degree: i32, condition: f64 },

    #[error("not in G: {0}")]
    NotInG(String),

    #[error("singular gauge field: {0}")]
    Singular(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("scenario error: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, HolabError>;

pub(crate) fn structural<T>(msg: impl Into<String>) -> Result<T> {
    Err(HolabError::Structural(msg.into()))
}
