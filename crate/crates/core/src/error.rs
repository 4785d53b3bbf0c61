use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("window is not constant-overlap-add at hop {hop} (deviation {deviation:.3e})")]
    NotCola { hop: usize, deviation: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("insufficient energy decay: {0}")]
    InsufficientDecay(String),

    #[error("singular normal equations")]
    Singular,

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("malformed feature file: {0}")]
    MalformedFeatures(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
