use thiserror::Error;

/// Error type shared by all kronmul operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("capacity exceeded: {elements} elements over cap of {cap}")]
    Capacity { elements: u128, cap: u128 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("protocol error between worker {src:?} and worker {dst:?}: {msg}")]
    Protocol {
        src: (usize, usize),
        dst: (usize, usize),
        msg: String,
    },
    #[error("verification failed: {0}")]
    Verify(String),
}

pub type Result<T> = std::result::Result<T, Error>;
