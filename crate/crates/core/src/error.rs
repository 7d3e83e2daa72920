use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("document is empty")]
    EmptyDocument,

    #[error("no non-empty document found after {0} draws")]
    NoUsableDocuments(usize),

    #[error("enumeration needs {0} configurations, limit is {1}")]
    TooManyConfigurations(u128, u128),

    #[error("word id {word} outside vocabulary of size {vocab}")]
    UnknownWord { word: usize, vocab: usize },

    #[error("top word {0} has zero document frequency")]
    ZeroDocFrequency(usize),

    #[error("word {0} is not covered by the document-frequency index")]
    UncoveredWord(usize),

    #[error("vocabulary mismatch: model has {model} words, corpus has {corpus}")]
    VocabularyMismatch { model: usize, corpus: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
