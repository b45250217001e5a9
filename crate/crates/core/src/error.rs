use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("oracle invalid: {0}")]
    OracleInvalid(String),

    #[error("oracle instance too large: {size} paths exceeds limit {limit}")]
    OracleTooLarge { size: u128, limit: u128 },

    #[error("unknown symbol {symbol:?} in {context:?}")]
    UnknownSymbol { symbol: String, context: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("infeasible target: {frames} frames, at least {required} required")]
    InfeasibleTarget { frames: usize, required: usize },

    #[error("invalid posterior: column {column} sums to {sum}")]
    InvalidPosterior { column: usize, sum: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("every utterance in the batch is infeasible for some head")]
    EmptyBatch,

    #[error("parse error in {what} at byte {offset}: {reason}")]
    Parse {
        what: String,
        offset: u64,
        reason: String,
    },

    #[error("utterance ids do not align: missing {missing:?}, extra {extra:?}")]
    Alignment {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("inventory mismatch: {0}")]
    InventoryMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            offset,
            reason: reason.into(),
        }
    }
}
