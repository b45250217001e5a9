//! Dense 2-D numerics and reverse-mode differentiation.

mod gradcheck;
pub(crate) mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::{log_softmax, log_softmax_cols, log_sum_exp, sigmoid};
pub use tape::{Gradients, LstmCache, Tape, Var};
pub use tensor::Tensor2D;
