use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The corpus has no sequences.
    EmptyCorpus,
    /// A sequence has no events.
    EmptySequence { id: String },
    /// An event token is the empty string.
    EmptyToken { id: String },
    /// A symbol is duplicated in an alphabet or collides with the boundary.
    InvalidAlphabet(String),
    /// An event code lies outside the alphabet.
    CodeOutOfRange { code: u32, alphabet_len: usize },
    TooFewSequences { needed: usize, found: usize },
    SequenceTooShort { id: String, len: usize },
    InvalidHyperparams(String),
    ShapeMismatch(String),
    IndexOutOfRange(String),
    /// A backward message row is NaN, infinite or identically zero.
    NonFiniteMessage { position: usize },
    /// Every candidate in a categorical draw has zero mass.
    ZeroMass { position: usize },
    InvalidProcess(String),
    RunawaySegment { process: String, limit: usize },
    LengthMismatch { left: usize, right: usize },
    InvalidArgument(String),
    Parse(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCorpus => write!(f, "corpus contains no sequences"),
            Error::EmptySequence { id } => write!(f, "sequence `{id}` has no events"),
            Error::EmptyToken { id } => write!(f, "sequence `{id}` contains an empty event token"),
            Error::InvalidAlphabet(msg) => write!(f, "invalid alphabet: {msg}"),
            Error::CodeOutOfRange { code, alphabet_len } => {
                write!(f, "event code {code} outside alphabet of size {alphabet_len}")
            }
            Error::TooFewSequences { needed, found } => {
                write!(f, "need at least {needed} sequences, found {found}")
            }
            Error::SequenceTooShort { id, len } => {
                write!(f, "sequence `{id}` has length {len}, need at least 2")
            }
            Error::InvalidHyperparams(msg) => write!(f, "invalid hyperparameters: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::IndexOutOfRange(msg) => write!(f, "index out of range: {msg}"),
            Error::NonFiniteMessage { position } => {
                write!(f, "backward message at stream position {position} is degenerate")
            }
            Error::ZeroMass { position } => {
                write!(f, "all candidates have zero probability at stream position {position}")
            }
            Error::InvalidProcess(msg) => write!(f, "invalid ground-truth process: {msg}"),
            Error::RunawaySegment { process, limit } => {
                write!(f, "segment of process `{process}` exceeded {limit} steps")
            }
            Error::LengthMismatch { left, right } => {
                write!(f, "label sequences differ in length ({left} vs {right})")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Parse(msg) => write!(f, "parse error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
