//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: shape mismatch ({lh}x{lw} vs {rh}x{rw})")]
    ShapeMismatch {
        context: &'static str,
        lh: usize,
        lw: usize,
        rh: usize,
        rw: usize,
    },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "grid {h}x{w} not divisible by 2^{levels}; pad the input or lower the decomposition depth"
    )]
    IndivisibleDimensions { h: usize, w: usize, levels: usize },

    #[error("model is not trainable; gradients are unavailable")]
    NotTrainable,

    #[error("channel count mismatch: model expects {expected}, input has {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: usize, value: f64 },

    #[error("non-finite reconstruction state at outer iteration {iteration}")]
    NonFiniteState { iteration: usize },

    #[error("sampling pattern cannot reach acceleration factor {target_r}: {reason}")]
    UnreachableAcceleration { target_r: f64, reason: String },

    #[error("bad file format in {path}: {reason}")]
    BadFormat { path: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
