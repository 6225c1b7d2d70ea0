use std::path::PathBuf;

use thiserror::Error;

use crate::language::Language;

#[derive(Debug, Error)]
pub enum DetoxError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is not valid UTF-8")]
    NotUtf8 { path: PathBuf },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: corpus contains no data rows")]
    EmptyCorpus { path: PathBuf },

    #[error("duplicate key {key:?} at lines {first_line} and {second_line}")]
    DuplicateKey {
        key: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("invalid lexicon entry {key:?}: {message}")]
    InvalidLexicon { key: String, message: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("model integrity error: {0}")]
    Integrity(String),

    #[error("unknown language code {0:?}")]
    UnknownLanguage(String),

    #[error("language mismatch: {expected} expected, {component} is {found}")]
    LanguageMismatch {
        component: &'static str,
        expected: Language,
        found: Language,
    },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("vocabulary is empty after stopword filtering")]
    EmptyVocabulary,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot split into {k} folds: class {label} has only {count} examples")]
    ClassTooSmall { k: usize, label: u8, count: usize },

    #[error("normalized key {key:?} is shared by {first:?} and {second:?}")]
    KeyCollision {
        key: String,
        first: String,
        second: String,
    },
}

pub type Result<T> = std::result::Result<T, DetoxError>;

impl DetoxError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DetoxError::Io {
            path: path.into(),
            source,
        }
    }
}
