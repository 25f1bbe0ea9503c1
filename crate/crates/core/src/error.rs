use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing header row")]
    MissingHeader { path: PathBuf },

    #[error("{path}: row {row} has {found} values, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("{path}: row {row}, column {column}: cannot parse {value:?} as a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row}, column {column}: value is not finite")]
    NonFinite {
        path: PathBuf,
        row: usize,
        column: String,
    },

    #[error("duplicate channel name {name:?} (columns {first} and {second})")]
    DuplicateChannel {
        name: String,
        first: usize,
        second: usize,
    },

    #[error("{path}: {found} data rows, at least 2 samples are required")]
    TooFewSamples { path: PathBuf, found: usize },

    #[error("malformed CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("unknown channel {name:?}; available channels: {}", available.join(", "))]
    UnknownChannel {
        name: String,
        available: Vec<String>,
    },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series too short: {operation} needs at least {required} values, got {found}")]
    SeriesTooShort {
        operation: &'static str,
        required: usize,
        found: usize,
    },

    #[error("signal has {samples} samples, shorter than one window of {window}")]
    NoWindows { samples: usize, window: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("k = {k} exceeds group count {groups}")]
    TooManyFolds { k: usize, groups: usize },

    #[error("model schema version {found:?} is not supported (supported: {})", supported.join(", "))]
    UnsupportedVersion {
        found: String,
        supported: Vec<String>,
    },

    #[error("malformed model document: {0}")]
    MalformedModel(String),

    #[error("model expects channel {expected:?}, recording has: {}", available.join(", "))]
    ChannelMismatch {
        expected: String,
        available: Vec<String>,
    },
}
