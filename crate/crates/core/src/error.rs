use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate law: {0}")]
    DegenerateLaw(String),

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("step budget exhausted after {steps} steps")]
    BudgetExhausted { steps: u64 },

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("cannot map an inconclusive verdict to a class statement")]
    Inconclusive,

    #[error("expression error: {0}")]
    Expression(String),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
