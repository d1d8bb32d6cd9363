//! Dense tensors, a reverse-mode tape and a finite-difference checker.

mod functional;
mod gradcheck;
mod params;
mod pattern;
mod tape;
mod tensor;

pub use functional::{gelu, softmax_bias_mask};
pub use gradcheck::{grad_check, grad_check_refined, relative_error, GradCheckReport, ParamCheck, WorstCoordinate, REL_ERROR_FLOOR};
pub use params::{Gradients, ParamId, ParamStore};
pub use pattern::Pattern;
pub use tape::{gaussian_kernel, row_softmax_values, GaussianSpec, Tape, Var};
pub use tensor::Tensor;
