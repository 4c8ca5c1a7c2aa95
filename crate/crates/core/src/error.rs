use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: empty input")]
    Empty { op: &'static str },

    #[error("invalid span list: {0}")]
    InvalidSpans(String),

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward: loss is not connected to any tracked leaf")]
    Detached,

    #[error("backward: tape has already been consumed")]
    AlreadyBackpropagated,

    #[error("ctc: label sequence needs at least {required} frames, got {frames}")]
    CtcInfeasible { frames: usize, required: usize },

    #[error("invalid label id {id} (vocabulary size {size})")]
    InvalidLabel { id: usize, size: usize },

    #[error("unknown gloss {0:?}")]
    UnknownGloss(String),

    #[error("wer: reference sequence is empty")]
    EmptyReference,

    #[error("dtw: {frames} frames cannot cover {glosses} glosses")]
    TooFewFrames { frames: usize, glosses: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}
