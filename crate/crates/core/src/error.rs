use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No radius in `[ceil(l/2), l]` has a sphere of at most `2 * c0 * l` vertices.
    #[error("growth assumption violated at vertex {vertex}: no thin sphere for radius {radius} with C0 = {c0}")]
    GrowthAssumptionViolated { vertex: usize, radius: usize, c0: f64 },

    #[error("exact oracle too large: {what} = {size} exceeds cap {cap}")]
    OracleTooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("conditioning has zero total weight")]
    InfeasibleConditioning,

    #[error("parameters outside the supported regime: {0}")]
    OutOfRegime(String),

    #[error("sampler step budget exhausted after {consumed} steps")]
    BudgetExhausted { consumed: u64 },

    #[error("sampler exhausted its budget on {retries} consecutive fresh streams at vertex {vertex}")]
    SamplerStuck { vertex: usize, retries: u32 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
