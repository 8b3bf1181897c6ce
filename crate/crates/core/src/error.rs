//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the calrec library.
#[derive(Debug, Error)]
pub enum Error {
    /// A record-level failure while reading a JSON-lines input.
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    /// An operation received an empty input it cannot work with.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A parameter is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A generated text does not follow the four-attribute item format.
    #[error(transparent)]
    Format(#[from] FormatError),

    /// Ground-truth users with no ranking, reported all at once.
    #[error("no ranking for {} user(s): {}", .0.len(), .0.join(", "))]
    MissingUsers(Vec<String>),

    /// More than one ranking supplied for the same user.
    #[error("duplicate ranking for user {0}")]
    DuplicateUser(String),

    /// An item id that is not part of the ranked corpus.
    #[error("item {0} not present in the ranking")]
    UnknownItem(String),

    /// Cosine similarity is undefined for a zero-norm row.
    #[error("zero-norm embedding row at index {0}")]
    ZeroNormRow(usize),

    /// Paired differences have zero variance; the t statistic is undefined.
    #[error("degenerate variance: all paired differences are equal")]
    DegenerateVariance,

    /// A serialized index file is missing or has the wrong magic/version.
    #[error("bad index file: {0}")]
    BadIndexFile(String),

    /// Remote generation failed for every requested user.
    #[error("generation failed for all {0} users")]
    AllUsersFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("http: {0}")]
    Http(String),
}

/// A generation that could not be split into the four item attributes.
///
/// Carries the offending text so callers can count and report it.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("text does not match the item format ({reason}): {text:?}")]
pub struct FormatError {
    pub text: String,
    pub reason: &'static str,
}

pub type Result<T> = std::result::Result<T, Error>;
