use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("feature index {index} is outside the range of field {field} ({lo}..{hi}); model and dictionary do not match")]
    IndexMismatch {
        field: usize,
        index: usize,
        lo: usize,
        hi: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("training fault in batch {batch}: {msg}")]
    TrainingFault { batch: usize, msg: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("checkpoint error in section `{section}`: {msg}")]
    Checkpoint { section: String, msg: String },

    #[error("dictionary mismatch: {0}")]
    DictionaryMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn checkpoint(section: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Checkpoint {
            section: section.into(),
            msg: msg.into(),
        }
    }

    /// Validation problems (bad config, bad input) as opposed to runtime faults.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Input(_) | Error::Config(_) | Error::Parse { .. } | Error::DictionaryMismatch(_)
        )
    }
}
