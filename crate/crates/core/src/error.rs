use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported format: {path}")]
    UnsupportedFormat { path: PathBuf },

    #[error("zero-sized image")]
    EmptyImage,

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic tag in {path}")]
    BadMagic { path: PathBuf },

    #[error("flow size mismatch: header declares {expected} bytes of payload, found {actual}")]
    FloSizeMismatch { expected: usize, actual: usize },

    #[error("non-finite flow at pixel ({x}, {y})")]
    NonFiniteFlow { x: usize, y: usize },

    #[error("invalid frame data: {0}")]
    InvalidFrame(String),

    #[error("resolution mismatch: expected {expected:?}, found {found:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("resolution {width}x{height} is too small (minimum {min})")]
    DegenerateResolution {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("no valid pixels")]
    NoValidPixels,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("missing frame {index} in {dir}")]
    MissingFrame { dir: PathBuf, index: usize },

    #[error("sequence mismatch: {0}")]
    SequenceMismatch(String),

    #[error("no frames found in {dir}")]
    EmptySequence { dir: PathBuf },

    #[error("session state: {0}")]
    Session(String),

    #[error("unknown preset {0:?} (expected default, objective or fast)")]
    UnknownPreset(String),

    #[error("config: {0}")]
    Config(String),

    #[error("frame {index} failed: {source}")]
    FrameFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
