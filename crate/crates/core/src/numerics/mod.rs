//! Minimal dense-array math with reverse-mode automatic differentiation.
//!
//! Everything in the crate computes in `f64`. The model is tiny (hidden size
//! 32), so double precision costs little and makes finite-difference gradient
//! checks meaningful.

mod adam;
mod init;
mod param_map;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use init::{seeded_rng, uniform_fan_in, Rng};
pub use param_map::{read_tensor_map, write_tensor_map};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors raised by tensor construction, forward ops and backward passes.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("non-finite values produced by {op}")]
    NonFinite { op: &'static str },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("variables belong to different tapes")]
    TapeMismatch,
}

pub type Result<T> = std::result::Result<T, NumericsError>;
