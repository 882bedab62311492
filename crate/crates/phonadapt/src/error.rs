//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain label must be 0 or 1, got {0}")]
    DomainLabel(u8),

    /// Multi-label frame with no positive or no negative labels; the
    /// pairwise loss normalizer is undefined there. Callers treat the
    /// frame as zero loss / zero gradient and count it.
    #[error("degenerate multi-label target: need at least one positive and one negative label")]
    DegenerateTarget,

    #[error("unknown phoneme symbol {0:?}")]
    UnknownPhoneme(String),

    #[error("phonetic table format error: {0}")]
    TableFormat(String),

    #[error("phonetic table schema error: {0}")]
    TableSchema(String),

    #[error("phonetic table validation error: {0}")]
    TableValidation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("unsupported wav format: {0}")]
    UnsupportedWav(String),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("utterance too short: {samples} samples, need at least {window} for one frame")]
    TooShort { samples: usize, window: usize },

    #[error("training error at {at}: {detail}")]
    Training { at: String, detail: String },

    #[error("batch error: {0}")]
    Batch(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pipeline stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
