use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: u64, reason: String },

    #[error("individual {id} appears in {present} but not in {missing}")]
    Referential { id: u64, present: &'static str, missing: &'static str },

    #[error("unknown baseline `{0}`")]
    UnknownBaseline(String),

    #[error(transparent)]
    Core(#[from] sbcb_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
