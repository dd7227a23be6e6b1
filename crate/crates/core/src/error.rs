use std::path::PathBuf;

use crate::components::CharacterCode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed dictionary line: {reason}")]
    DictionaryParse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: component id {id} outside [1, {vocab_size}]")]
    ComponentRange {
        path: PathBuf,
        line: usize,
        id: u32,
        vocab_size: u16,
    },
    #[error("{path}:{line}: character {character} already defined")]
    DuplicateCharacter {
        path: PathBuf,
        line: usize,
        character: CharacterCode,
    },
    #[error("character {0} has no component decomposition")]
    MissingCharacter(CharacterCode),
    #[error("no source glyph for character {0}")]
    MissingGlyph(CharacterCode),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("cannot read sample {path}: {reason}")]
    Sample { path: PathBuf, reason: String },
    #[error("invalid component sequence: {0}")]
    InvalidSequence(String),
    #[error("{what} {value} outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {parts}")]
    Divergence { step: u64, parts: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("tensor backend: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: i64, min: i64, max: i64) -> Self {
        Error::Range {
            what,
            value,
            min,
            max,
        }
    }

    /// Errors caused by bad input data rather than configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DictionaryParse { .. }
                | Error::ComponentRange { .. }
                | Error::DuplicateCharacter { .. }
                | Error::MissingCharacter(_)
                | Error::MissingGlyph(_)
                | Error::InvalidImage(_)
                | Error::Sample { .. }
                | Error::Image(_)
                | Error::Io(_)
        )
    }
}
