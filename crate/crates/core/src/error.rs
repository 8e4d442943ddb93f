use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown specialty `{0}`")]
    UnknownSpecialty(String),

    #[error("difficulty {difficulty} out of range [{min}, {max}] for specialty `{specialty}`")]
    DifficultyOutOfRange {
        specialty: &'static str,
        difficulty: u8,
        min: u8,
        max: u8,
    },

    #[error("character {0:?} is not in the vocabulary")]
    UnknownSymbol(char),

    #[error("token id {0} is outside the vocabulary")]
    TokenOutOfRange(u32),

    #[error("sequence of {len} tokens exceeds context length {limit}")]
    ContextOverflow { len: usize, limit: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("group of {0} rewards is too small for group statistics (need at least 2)")]
    GroupTooSmall(usize),

    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),

    #[error("malformed packet: {0}")]
    MalformedPacket(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("configurations {a} and {b} have mismatched round counts ({rounds_a} vs {rounds_b})")]
    MismatchedRounds {
        a: String,
        b: String,
        rounds_a: usize,
        rounds_b: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
