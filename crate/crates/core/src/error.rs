use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("occupancy entry {value} does not fit radix {radix}")]
    Radix { value: u32, radix: u32 },

    #[error("replay buffer holds {available} transitions, batch needs {requested}")]
    InsufficientSamples { available: usize, requested: usize },

    #[error("exhaustive search over {configurations} configurations exceeds the limit of {limit}")]
    InstanceTooLarge { configurations: u128, limit: u128 },

    #[error("no assignment satisfies the constraint set")]
    Infeasible,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
