//! Minimal dense-matrix reverse-mode automatic differentiation.
//!
//! Everything the model needs and nothing more: a handful of matrix
//! primitives recorded on a per-pass [`Tape`], a GRU cell composed from
//! them, an Adam optimizer, and bit-exact parameter checkpoints. All values
//! are `f64`.

pub mod adam;
pub mod checkpoint;
pub mod gru;
pub mod matrix;
pub mod params;
pub mod tape;

pub use adam::AdamState;
pub use gru::{gru_cell, GruCellVars};
pub use matrix::Matrix;
pub use params::{normal_init, xavier_uniform, Param, ParamId, ParamStore};
pub use tape::{ColumnMap, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("numeric error: non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("state error: backward already ran on this tape")]
    TapeConsumed,
    #[error("state error: optimizer step with missing gradients")]
    MissingGradients,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
