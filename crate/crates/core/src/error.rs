//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}{}", context_suffix(.context))]
    NonFinite {
        op: &'static str,
        context: Option<String>,
    },

    #[error("index out of range in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error at line {line}: {detail}")]
    Schema { line: usize, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach run context (e.g. the offending batch) to a non-finite error.
    pub fn with_context(self, ctx: impl Into<String>) -> Self {
        match self {
            Error::NonFinite { op, .. } => Error::NonFinite {
                op,
                context: Some(ctx.into()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
