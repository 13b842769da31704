use alloc::string::String;

/// Errors raised by tensor, convolution, schedule and training routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("sequence too short: need at least {need} samples, got {got}")]
    SequenceTooShort { need: usize, got: usize },
    #[error("output size would be < 1 (input {input}, pad {pad}, dilated kernel {kernel}, stride {stride})")]
    EmptyOutput {
        input: usize,
        pad: usize,
        kernel: usize,
        stride: usize,
    },
    #[error("empty dilation schedule")]
    EmptySchedule,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("iteration {iter} exceeds max_iter {max_iter}")]
    IterOutOfRange { iter: usize, max_iter: usize },
    #[error("training diverged at iteration {iter} (lr {lr}): loss is {loss}")]
    Diverged { iter: usize, lr: f64, loss: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
