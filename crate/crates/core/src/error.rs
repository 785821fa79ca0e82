//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },

    #[error("sort error: {msg}")]
    Sort { msg: String },

    #[error("contract for `{pred}` violates condition ({condition}): {msg}")]
    ContractForm {
        pred: String,
        condition: &'static str,
        msg: String,
    },

    #[error("missing contract for program predicate `{0}`")]
    MissingContract(String),

    #[error("duplicate contract for predicate `{0}`")]
    DuplicateContract(String),

    #[error("predicate `{pred}` must be both a program predicate and a catamorphism: {msg}")]
    ClassificationConflict { pred: String, msg: String },

    #[error("predicate `{pred}` is not a catamorphism: {msg}")]
    SchemaViolation { pred: String, msg: String },

    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),

    #[error("solver protocol error: {0}")]
    SolverProtocol(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("iteration cap ({0}) exceeded during transformation")]
    IterationCap(u32),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
