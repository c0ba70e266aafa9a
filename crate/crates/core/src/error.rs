use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} is empty")]
    Empty(String),

    #[error("duplicate symbol {symbol:?} on line {line}")]
    DuplicateSymbol { symbol: String, line: usize },

    #[error("invalid symbol {symbol:?} on line {line}: {reason}")]
    InvalidSymbol {
        symbol: String,
        line: usize,
        reason: String,
    },

    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("cannot segment word {word:?} at byte offset {offset}")]
    Unsegmentable { word: String, offset: usize },

    #[error("invalid class alphabet: {0}")]
    ClassAlphabet(String),

    #[error("invalid entity list for {class}: {reason}")]
    Entities { class: String, reason: String },

    #[error("unknown FST state {0}")]
    UnknownState(u32),

    #[error("malformed {what} at byte offset {offset}: {reason}")]
    Malformed {
        what: &'static str,
        offset: usize,
        reason: String,
    },

    #[error("automaton invariant violated for {class}: {reason}")]
    FstInvariant { class: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("token id {0} outside the model alphabet")]
    OutOfAlphabet(u32),

    #[error("sequence length mismatch: {symbols} symbols, {labels} alignment labels")]
    LengthMismatch { symbols: usize, labels: usize },

    #[error("class {0} has no automaton")]
    MissingFst(String),

    #[error("history of length {len} exceeds the exact-enumeration limit of {max}")]
    HistoryTooLong { len: usize, max: usize },

    #[error("dead history: symbol at position {position} has zero probability under every alignment")]
    DeadHistory { position: usize },

    #[error("grammar error: {0}")]
    Grammar(String),

    #[error("non-terminal {class} has no entities (looked for {looked_for})")]
    MissingEntities { class: String, looked_for: String },

    #[error("unknown terminal {token:?} in pattern on line {line}")]
    UnknownTerminal { token: String, line: usize },

    #[error("empty pattern on line {line}")]
    EmptyPattern { line: usize },

    #[error("bundle error: {0}")]
    Bundle(String),

    #[error("bundle component {component} missing at {path}")]
    MissingComponent { component: String, path: PathBuf },

    #[error("{what} version mismatch: found {found}, expected {expected}")]
    VersionMismatch {
        what: String,
        found: u32,
        expected: u32,
    },

    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
