//! Hierarchical multitask CTC acoustic-to-subword modeling.
//!
//! The crate covers the whole pipeline: character and BPE unit inventories,
//! a small reverse-mode differentiation tape with LSTM and CTC operations,
//! singletask / block multitask / hierarchical multitask model topologies,
//! greedy and LM-fused prefix beam decoding, and WER scoring.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). Training and
//! loss paths use `f64`; the aliases below fix that choice for callers that
//! do not care about the scalar type.

pub mod ctc;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod lm;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod scalar;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Dense matrix used on the training path.
pub type Tensor = numerics::Tensor2D<f64>;
/// Differentiation tape used on the training path.
pub type Tape = numerics::Tape<f64>;
/// Per-frame log-posteriors over an extended inventory.
pub type Posterior = ctc::PosteriorMatrix<f64>;
/// Acoustic model with `f64` parameters.
pub type Model = model::ModelGraph<f64>;
/// Single-precision acoustic model, for inference experiments.
pub type ModelF32 = model::ModelGraph<f32>;
