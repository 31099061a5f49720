//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An internal contract between components was violated (dimension
    /// mismatches, un-normalized probability vectors, empty record sets).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A remote call failed after exhausting its retry budget.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    /// The simulator produced unusable output.
    #[error("simulator error: {0}")]
    Simulator(String),

    /// Vector-store access failure (empty bucket, unknown label, ...).
    #[error("store error: {0}")]
    Store(String),

    /// A persisted file failed validation on load; names the offending field.
    #[error("load error in field `{field}`: {message}")]
    Load { field: String, message: String },

    /// Dataset ingestion failure, pointing at the offending row.
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: usize, message: String },

    /// Rejection sampling exhausted its budget with zero acceptances.
    #[error(
        "epsilon too tight: no acceptances in {simulations_used} simulations \
         (minimum observed distance {min_distance})"
    )]
    EpsilonTooTight {
        min_distance: f64,
        simulations_used: usize,
    },

    /// None of the option tokens appeared in the returned log-probabilities.
    #[error("logits unavailable: no option token found in top log-probabilities")]
    LogitsUnavailable,

    /// AUROC needs at least one correct and one incorrect prediction.
    #[error("undefined AUROC: need at least one correct and one incorrect prediction")]
    UndefinedAuroc,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
