use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while loading, searching, clustering or pruning.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("channel chain broken: layer {layer} has {found} input channels but layer {prev} has {expected} filters")]
    ChannelChain {
        layer: u32,
        prev: u32,
        expected: usize,
        found: usize,
    },

    #[error("missing weight blob for layer {layer}: {path}")]
    MissingBlob { layer: u32, path: PathBuf },

    #[error("truncated weight blob for layer {layer}: expected {expected} bytes, found {found}")]
    TruncatedBlob {
        layer: u32,
        expected: u64,
        found: u64,
    },

    #[error("weight blob for layer {layer} does not match manifest: expected {expected} bytes, found {found}")]
    BlobSizeMismatch {
        layer: u32,
        expected: u64,
        found: u64,
    },

    #[error("malformed report {path}: {reason}")]
    MalformedReport { path: PathBuf, reason: String },

    #[error("invalid report: {0}")]
    InvalidReport(String),

    #[error("filter shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid level {level} for pyramid shape (s={s}, m={m}, k={k})")]
    InvalidLevel {
        level: String,
        s: usize,
        m: u32,
        k: usize,
    },

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("cluster count {c} out of range 1..={n}")]
    ClusterCount { c: usize, n: usize },

    #[error("unknown layer {0}")]
    UnknownLayer(u32),

    #[error("unknown filter {filter} in layer {layer}")]
    UnknownFilter { layer: u32, filter: u32 },

    #[error("retained count {retained} exceeds width {width} of layer {layer}")]
    RetentionExceedsWidth {
        layer: u32,
        retained: usize,
        width: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluator failed while pruning layer {layer}: {source}")]
    EvaluatorAtLayer {
        layer: u32,
        #[source]
        source: EvaluatorError,
    },

    #[error("evaluator failed: {0}")]
    Evaluator(#[from] EvaluatorError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the external evaluator process or its protocol.
    pub fn is_evaluator(&self) -> bool {
        matches!(self, Error::Evaluator(_) | Error::EvaluatorAtLayer { .. })
    }
}

/// Failures talking to an evaluator.
#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("could not start evaluator `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("evaluator closed its output{}", status.as_ref().map(|s| format!(" ({s})")).unwrap_or_default())]
    Closed { status: Option<String> },

    #[error("evaluator exited with {0}")]
    Exit(String),

    #[error("malformed evaluator reply {line:?}: {reason}")]
    Malformed { line: String, reason: String },

    #[error("evaluator reported an error: {0}")]
    Remote(String),

    #[error("evaluator did not reply within {0:?}")]
    Timeout(std::time::Duration),

    #[error("evaluator i/o: {0}")]
    Io(#[from] std::io::Error),
}
